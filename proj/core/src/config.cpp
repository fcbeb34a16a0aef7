#include "i2md/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "i2md/error.hpp"

namespace i2md {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(s);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& cell : split_list(text)) out.push_back(parse_number<std::size_t>(key, cell));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

// Every accepted key, keyed by "section.key".
const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_key = [](std::size_t& (*field)(RunConfig&)) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_number<std::size_t>(k, v); };
    };
    auto dbl_key = [](double& (*field)(RunConfig&)) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); };
    };
    auto bool_key = [](bool& (*field)(RunConfig&)) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); };
    };

    t["dataset.num_classes"] = size_key([](RunConfig& c) -> std::size_t& { return c.dataset.num_classes; });
    t["dataset.train_per_class"] = size_key([](RunConfig& c) -> std::size_t& { return c.dataset.train_per_class; });
    t["dataset.test_per_class"] = size_key([](RunConfig& c) -> std::size_t& { return c.dataset.test_per_class; });
    t["dataset.frames"] = size_key([](RunConfig& c) -> std::size_t& { return c.dataset.frames; });
    t["dataset.noise_std"] = dbl_key([](RunConfig& c) -> double& { return c.dataset.noise_std; });
    t["dataset.rotation_max_rad"] = dbl_key([](RunConfig& c) -> double& { return c.dataset.rotation_max_rad; });
    t["dataset.amplitude"] = dbl_key([](RunConfig& c) -> double& { return c.dataset.amplitude; });
    t["dataset.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.dataset.seed = parse_number<std::uint64_t>(k, v);
    };
    t["dataset.topology"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (trim(v) == "humanoid9") {
        c.dataset.topology = Topology::humanoid9();
        return;
      }
      std::vector<int> parents;
      for (const auto& cell : split_list(v)) parents.push_back(parse_number<int>(k, cell));
      try {
        c.dataset.topology = Topology(parents);
      } catch (const ContractError& e) {
        throw ConfigError("config key '" + k + "': " + e.what());
      }
    };

    t["augment.rotation_max_x"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.rotation_max_rad[0]; });
    t["augment.rotation_max_y"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.rotation_max_rad[1]; });
    t["augment.rotation_max_z"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.rotation_max_rad[2]; });
    t["augment.shear_max"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.shear_max; });
    t["augment.crop_min_ratio"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.crop_min_ratio; });
    t["augment.jitter_std"] = dbl_key([](RunConfig& c) -> double& { return c.train.augment.jitter_std; });
    t["augment.rotation"] = bool_key([](RunConfig& c) -> bool& { return c.train.augment.rotation; });
    t["augment.shear"] = bool_key([](RunConfig& c) -> bool& { return c.train.augment.shear; });
    t["augment.crop"] = bool_key([](RunConfig& c) -> bool& { return c.train.augment.crop; });
    t["augment.jitter"] = bool_key([](RunConfig& c) -> bool& { return c.train.augment.jitter; });

    // encoder.preset is handled before the other keys.
    t["encoder.preset"] = [](RunConfig&, const std::string&, const std::string&) {};
    t["encoder.gcn_channels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.encoder.gcn_channels = parse_size_list(k, v);
    };
    t["encoder.layers"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.encoder.layers; });
    t["encoder.model_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.encoder.model_dim; });
    t["encoder.heads"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.encoder.heads; });
    t["encoder.ffn_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.encoder.ffn_dim; });
    t["encoder.projection_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.encoder.projection_dim; });
    t["encoder.positional"] = bool_key([](RunConfig& c) -> bool& { return c.train.encoder.positional; });

    t["loss.tau_c"] = dbl_key([](RunConfig& c) -> double& { return c.train.temperatures.contrastive; });
    t["loss.tau_t"] = dbl_key([](RunConfig& c) -> double& { return c.train.temperatures.teacher; });
    t["loss.tau_s"] = dbl_key([](RunConfig& c) -> double& { return c.train.temperatures.student; });
    t["loss.lambda_cmd"] = dbl_key([](RunConfig& c) -> double& { return c.train.weights.lambda_cmd; });
    t["loss.k_c"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.k_c; });
    t["loss.k_d"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.k_d; });

    t["train.bank_size"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.bank_size; });
    t["train.alpha"] = dbl_key([](RunConfig& c) -> double& { return c.train.alpha; });
    t["train.batch_size"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    t["train.epochs"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    t["train.learning_rate"] = dbl_key([](RunConfig& c) -> double& { return c.train.learning_rate; });
    t["train.momentum"] = dbl_key([](RunConfig& c) -> double& { return c.train.momentum; });
    t["train.weight_decay"] = dbl_key([](RunConfig& c) -> double& { return c.train.weight_decay; });
    t["train.lr_decay_ratio"] = dbl_key([](RunConfig& c) -> double& { return c.train.lr_decay_ratio; });
    t["train.lr_decay_factor"] = dbl_key([](RunConfig& c) -> double& { return c.train.lr_decay_factor; });
    t["train.modalities"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.train.modalities.clear();
      for (const auto& cell : split_list(v)) c.train.modalities.push_back(parse_modality(cell));
    };
    t["train.disable_cmd"] = bool_key([](RunConfig& c) -> bool& { return c.train.disable_cmd; });
    t["train.disable_imd"] = bool_key([](RunConfig& c) -> bool& { return c.train.disable_imd; });
    t["train.normalize_inputs"] = bool_key([](RunConfig& c) -> bool& { return c.train.normalize_inputs; });
    t["train.check_invariants"] = bool_key([](RunConfig& c) -> bool& { return c.train.check_invariants; });
    t["train.keep_epoch_checkpoints"] = bool_key([](RunConfig& c) -> bool& { return c.train.keep_epoch_checkpoints; });

    t["eval.probe_epochs"] = size_key([](RunConfig& c) -> std::size_t& { return c.probe.epochs; });
    t["eval.probe_lr"] = dbl_key([](RunConfig& c) -> double& { return c.probe.learning_rate; });
    t["eval.probe_milestones"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.probe.milestones = parse_size_list(k, v);
    };
    t["eval.probe_decay"] = dbl_key([](RunConfig& c) -> double& { return c.probe.decay_factor; });
    t["eval.probe_batch"] = size_key([](RunConfig& c) -> std::size_t& { return c.probe.batch_size; });
    t["eval.probe_momentum"] = dbl_key([](RunConfig& c) -> double& { return c.probe.momentum; });
    t["eval.probe_weight_decay"] = dbl_key([](RunConfig& c) -> double& { return c.probe.weight_decay; });
    t["eval.standardize"] = bool_key([](RunConfig& c) -> bool& { return c.probe.standardize; });

    t["run.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.seed = parse_number<std::uint64_t>(k, v);
      c.probe.seed = c.train.seed;
    };
    t["run.output_dir"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  dataset.validate();
  train.validate();
  probe.validate();
  if (train.encoder.frames != dataset.frames) throw ConfigError("encoder frames must equal dataset frames");
}

RunConfig parse_run_config(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream is(ini_text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!setters().count(full)) throw ConfigError("unknown config key '" + full + "'");
    }
  }
  if (auto preset = tree.get_optional<std::string>("encoder.preset")) config.encoder_preset = trim(*preset);
  config.train.encoder = EncoderConfig::preset(config.encoder_preset);
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) setters().at(section + "." + key)(config, section + "." + key, value.data());
  }
  config.train.encoder.frames = config.dataset.frames;
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  const auto& d = c.dataset;
  std::vector<int> parents = d.topology.parents();
  os << "[dataset]\n"
     << "num_classes = " << d.num_classes << "\ntrain_per_class = " << d.train_per_class
     << "\ntest_per_class = " << d.test_per_class << "\nframes = " << d.frames << "\nnoise_std = " << fmt(d.noise_std)
     << "\nrotation_max_rad = " << fmt(d.rotation_max_rad) << "\namplitude = " << fmt(d.amplitude)
     << "\nseed = " << d.seed << "\ntopology = " << join(parents) << "\n\n";
  const auto& a = c.train.augment;
  os << "[augment]\n"
     << "rotation_max_x = " << fmt(a.rotation_max_rad[0]) << "\nrotation_max_y = " << fmt(a.rotation_max_rad[1])
     << "\nrotation_max_z = " << fmt(a.rotation_max_rad[2]) << "\nshear_max = " << fmt(a.shear_max)
     << "\ncrop_min_ratio = " << fmt(a.crop_min_ratio) << "\njitter_std = " << fmt(a.jitter_std)
     << "\nrotation = " << fmt(a.rotation) << "\nshear = " << fmt(a.shear) << "\ncrop = " << fmt(a.crop)
     << "\njitter = " << fmt(a.jitter) << "\n\n";
  const auto& e = c.train.encoder;
  os << "[encoder]\n"
     << "preset = " << c.encoder_preset << "\ngcn_channels = " << join(e.gcn_channels) << "\nlayers = " << e.layers
     << "\nmodel_dim = " << e.model_dim << "\nheads = " << e.heads << "\nffn_dim = " << e.ffn_dim
     << "\nprojection_dim = " << e.projection_dim << "\npositional = " << fmt(e.positional) << "\n\n";
  const auto& t = c.train;
  os << "[loss]\n"
     << "tau_c = " << fmt(t.temperatures.contrastive) << "\ntau_t = " << fmt(t.temperatures.teacher)
     << "\ntau_s = " << fmt(t.temperatures.student) << "\nlambda_cmd = " << fmt(t.weights.lambda_cmd)
     << "\nk_c = " << t.k_c << "\nk_d = " << t.k_d << "\n\n";
  std::vector<std::string> mods;
  for (auto m : t.modalities) mods.emplace_back(modality_name(m));
  os << "[train]\n"
     << "bank_size = " << t.bank_size << "\nalpha = " << fmt(t.alpha) << "\nbatch_size = " << t.batch_size
     << "\nepochs = " << t.epochs << "\nlearning_rate = " << fmt(t.learning_rate) << "\nmomentum = " << fmt(t.momentum)
     << "\nweight_decay = " << fmt(t.weight_decay) << "\nlr_decay_ratio = " << fmt(t.lr_decay_ratio)
     << "\nlr_decay_factor = " << fmt(t.lr_decay_factor) << "\nmodalities = " << join(mods)
     << "\ndisable_cmd = " << fmt(t.disable_cmd) << "\ndisable_imd = " << fmt(t.disable_imd)
     << "\nnormalize_inputs = " << fmt(t.normalize_inputs)
     << "\ncheck_invariants = " << fmt(t.check_invariants)
     << "\nkeep_epoch_checkpoints = " << fmt(t.keep_epoch_checkpoints) << "\n\n";
  const auto& p = c.probe;
  os << "[eval]\n"
     << "probe_epochs = " << p.epochs << "\nprobe_lr = " << fmt(p.learning_rate)
     << "\nprobe_milestones = " << join(p.milestones) << "\nprobe_decay = " << fmt(p.decay_factor)
     << "\nprobe_batch = " << p.batch_size << "\nprobe_momentum = " << fmt(p.momentum)
     << "\nprobe_weight_decay = " << fmt(p.weight_decay) << "\nstandardize = " << fmt(p.standardize) << "\n\n";
  os << "[run]\nseed = " << t.seed << '\n';
  if (!c.output_dir.empty()) os << "output_dir = " << c.output_dir.string() << '\n';
  return os.str();
}

void apply_ablation(RunConfig& config, const std::string& name) {
  if (name == "disable_cmd") {
    config.train.disable_cmd = true;
  } else if (name == "disable_imd") {
    config.train.disable_imd = true;
  } else if (name == "scl_only") {
    config.train.disable_cmd = true;
    config.train.disable_imd = true;
  } else {
    throw ConfigError("unknown ablation '" + name + "' (expected disable_cmd, disable_imd or scl_only)");
  }
}

}  // namespace i2md
