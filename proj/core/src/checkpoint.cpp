#include <cstdio>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "i2md/error.hpp"
#include "i2md/trainer.hpp"

namespace i2md {
namespace {

constexpr char kMagic[8] = {'I', '2', 'M', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// Rejects keys the reader does not know, so a typo never falls back to a default.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

void write_params(std::ostream& os, const EncoderParams& p) {
  const auto named = p.named();
  io::write_pod<std::uint64_t>(os, named.size());
  for (const auto& [name, t] : named) {
    io::write_string(os, name);
    std::vector<std::uint64_t> shape(t.shape().begin(), t.shape().end());
    io::write_vector(os, shape);
    const auto d = t.data();
    io::write_vector(os, std::vector<double>(d.begin(), d.end()));
  }
}

void write_norm(std::ostream& os, const EncoderParams& p) {
  io::write_pod<std::uint8_t>(os, p.input_norm ? 1 : 0);
  if (p.input_norm) {
    io::write_vector(os, p.input_norm->mean);
    io::write_vector(os, p.input_norm->scale);
  }
}

void read_norm(std::istream& is, EncoderParams& p) {
  const auto flag = io::read_pod<std::uint8_t>(is);
  if (flag > 1) throw IoError("corrupt input normalization flag in checkpoint");
  if (!flag) {
    p.input_norm.reset();
    return;
  }
  InputNormalization n;
  n.mean = io::read_vector<double>(is, 1 << 16);
  n.scale = io::read_vector<double>(is, 1 << 16);
  if (n.mean.size() != n.scale.size()) throw IoError("checkpoint input normalization is inconsistent");
  p.input_norm = std::move(n);
}

void read_params(std::istream& is, EncoderParams& p) {
  auto named = p.named();
  const auto count = io::read_pod<std::uint64_t>(is);
  if (count != named.size()) throw IoError("checkpoint parameter count does not match the encoder config");
  for (auto& [name, t] : named) {
    const std::string stored = io::read_string(is, 1 << 16);
    const auto shape = io::read_vector<std::uint64_t>(is, 8);
    const auto data = io::read_vector<double>(is);
    if (stored != name || Shape(shape.begin(), shape.end()) != t.shape() || data.size() != t.numel()) {
      throw IoError("checkpoint parameter '" + stored + "' does not match expected '" + name + "' " +
                    shape_string(t.shape()));
    }
    std::copy(data.begin(), data.end(), t.mutable_data().begin());
  }
}

}  // namespace

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"in_channels", c.in_channels}, {"gcn_channels", c.gcn_channels}, {"frames", c.frames},
          {"layers", c.layers},           {"model_dim", c.model_dim},       {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},         {"projection_dim", c.projection_dim}, {"positional", c.positional}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"in_channels", "gcn_channels", "frames", "layers", "model_dim", "heads", "ffn_dim",
                      "projection_dim", "positional"},
                     "encoder config");
  EncoderConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.gcn_channels = j.at("gcn_channels").get<std::vector<std::size_t>>();
  c.frames = j.at("frames").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.projection_dim = j.at("projection_dim").get<std::size_t>();
  c.positional = j.at("positional").get<bool>();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json mods = nlohmann::json::array();
  for (auto m : c.modalities) mods.push_back(std::string(modality_name(m)));
  const auto& a = c.augment;
  nlohmann::json aug = {{"rotation_max_rad", a.rotation_max_rad},
                        {"shear_max", a.shear_max},
                        {"crop_min_ratio", a.crop_min_ratio},
                        {"jitter_std", a.jitter_std},
                        {"rotation", a.rotation},
                        {"shear", a.shear},
                        {"crop", a.crop},
                        {"jitter", a.jitter}};
  return {{"modalities", mods},
          {"encoder", to_json(c.encoder)},
          {"augment", aug},
          {"tau_c", c.temperatures.contrastive},
          {"tau_t", c.temperatures.teacher},
          {"tau_s", c.temperatures.student},
          {"lambda_cmd", c.weights.lambda_cmd},
          {"bank_size", c.bank_size},
          {"k_c", c.k_c},
          {"k_d", c.k_d},
          {"alpha", c.alpha},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"lr_decay_ratio", c.lr_decay_ratio},
          {"lr_decay_factor", c.lr_decay_factor},
          {"disable_cmd", c.disable_cmd},
          {"disable_imd", c.disable_imd},
          {"normalize_inputs", c.normalize_inputs},
          {"check_invariants", c.check_invariants},
          {"keep_epoch_checkpoints", c.keep_epoch_checkpoints},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"modalities", "encoder", "augment", "tau_c", "tau_t", "tau_s", "lambda_cmd", "bank_size", "k_c",
                      "k_d", "alpha", "batch_size", "epochs", "learning_rate", "momentum", "weight_decay",
                      "lr_decay_ratio", "lr_decay_factor", "disable_cmd", "disable_imd", "normalize_inputs", "check_invariants",
                      "keep_epoch_checkpoints", "seed"},
                     "train config");
  TrainConfig c;
  c.modalities.clear();
  for (const auto& m : j.at("modalities")) c.modalities.push_back(parse_modality(m.get<std::string>()));
  c.encoder = encoder_config_from_json(j.at("encoder"));
  const auto& a = j.at("augment");
  require_known_keys(a, {"rotation_max_rad", "shear_max", "crop_min_ratio", "jitter_std", "rotation", "shear", "crop", "jitter"},
                     "augment config");
  c.augment.rotation_max_rad = a.at("rotation_max_rad").get<std::array<double, 3>>();
  c.augment.shear_max = a.at("shear_max").get<double>();
  c.augment.crop_min_ratio = a.at("crop_min_ratio").get<double>();
  c.augment.jitter_std = a.at("jitter_std").get<double>();
  c.augment.rotation = a.at("rotation").get<bool>();
  c.augment.shear = a.at("shear").get<bool>();
  c.augment.crop = a.at("crop").get<bool>();
  c.augment.jitter = a.at("jitter").get<bool>();
  c.temperatures.contrastive = j.at("tau_c").get<double>();
  c.temperatures.teacher = j.at("tau_t").get<double>();
  c.temperatures.student = j.at("tau_s").get<double>();
  c.weights.lambda_cmd = j.at("lambda_cmd").get<double>();
  c.bank_size = j.at("bank_size").get<std::size_t>();
  c.k_c = j.at("k_c").get<std::size_t>();
  c.k_d = j.at("k_d").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.lr_decay_ratio = j.at("lr_decay_ratio").get<double>();
  c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  c.disable_cmd = j.at("disable_cmd").get<bool>();
  c.disable_imd = j.at("disable_imd").get<bool>();
  c.normalize_inputs = j.at("normalize_inputs").get<bool>();
  c.check_invariants = j.at("check_invariants").get<bool>();
  c.keep_epoch_checkpoints = j.at("keep_epoch_checkpoints").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    io::write_pod(os, kVersion);
    io::write_string(os, to_json(state.config).dump());
    std::vector<std::int32_t> parents(state.topology.parents().begin(), state.topology.parents().end());
    io::write_vector(os, parents);
    io::write_pod<std::uint64_t>(os, state.epoch);
    io::write_pod<std::uint64_t>(os, state.step);
    io::write_string(os, save_rng_state(state.rng));
    state.optimizer.write(os);
    io::write_pod<std::uint64_t>(os, state.models.size());
    for (const auto& mm : state.models) {
      io::write_pod<std::int32_t>(os, static_cast<std::int32_t>(mm.modality));
      write_params(os, mm.query);
      write_params(os, mm.key);
      write_norm(os, mm.query);
      write_norm(os, mm.key);
    }
    state.banks.write(os);
    os.write(kMagic, sizeof(kMagic));
    os.flush();
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw IoError(path.string() + " is not a checkpoint");
  if (io::read_pod<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  TrainConfig config;
  try {
    config = train_config_from_json(nlohmann::json::parse(io::read_string(is, 1 << 24)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint config echo is malformed: " + std::string(e.what()));
  }
  const auto parents = io::read_vector<std::int32_t>(is, 1 << 16);
  TrainState state = TrainState::init(config, Topology(std::vector<int>(parents.begin(), parents.end())));
  state.epoch = io::read_pod<std::uint64_t>(is);
  state.step = io::read_pod<std::uint64_t>(is);
  restore_rng_state(state.rng, io::read_string(is, 1 << 20));
  state.optimizer = OptimizerState::read(is);
  if (io::read_pod<std::uint64_t>(is) != state.models.size()) throw IoError("checkpoint modality count mismatch");
  for (auto& mm : state.models) {
    if (io::read_pod<std::int32_t>(is) != static_cast<std::int32_t>(mm.modality)) {
      throw IoError("checkpoint modality order mismatch");
    }
    read_params(is, mm.query);
    read_params(is, mm.key);
    read_norm(is, mm.query);
    read_norm(is, mm.key);
  }
  state.banks = BankGroup::read(is);
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw IoError("checkpoint " + path.string() + " is truncated");
  return state;
}

}  // namespace i2md
