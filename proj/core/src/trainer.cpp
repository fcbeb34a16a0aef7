#include "i2md/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "i2md/error.hpp"
#include "i2md/ops.hpp"

namespace i2md {
namespace {

constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kShuffleStream = 0x1002;
constexpr std::uint64_t kAugmentStream = 0x1003;

Tensor neighbor_values(const MemoryBank& bank, const Tensor& z, std::size_t k) {
  std::vector<std::size_t> flat;
  flat.reserve(z.dim(0) * k);
  for (const auto& top : bank.top_k_rows(z.detach(), k)) flat.insert(flat.end(), top.indices.begin(), top.indices.end());
  return bank.gather_values(flat);
}

std::vector<SkeletonSequence> derive_all(const std::vector<SkeletonSequence>& views, Modality m,
                                         const Topology& topology) {
  std::vector<SkeletonSequence> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(derive_modality(v, m, topology));
  return out;
}

void append_prefixed(std::vector<NamedTensor>& out, std::vector<NamedTensor> params, Modality m) {
  const std::string prefix = std::string(modality_name(m)) + ".";
  for (auto& [name, t] : params) out.emplace_back(prefix + name, std::move(t));
}

}  // namespace

void TrainConfig::validate() const {
  if (modalities.empty()) throw ConfigError("at least one modality is required");
  std::set<Modality> seen(modalities.begin(), modalities.end());
  if (seen.size() != modalities.size()) throw ConfigError("modalities must not repeat");
  encoder.validate();
  augment.validate();
  temperatures.validate();
  weights.validate();
  if (bank_size == 0) throw ConfigError("bank_size must be >= 1");
  if (k_c == 0 || k_c > bank_size) throw ConfigError("k_c must lie in [1, bank_size]");
  if (k_d == 0 || k_d > bank_size) throw ConfigError("k_d must lie in [1, bank_size]");
  if (batch_size == 0 || batch_size > bank_size) throw ConfigError("batch_size must lie in [1, bank_size]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(lr_decay_ratio >= 0.0 && lr_decay_ratio <= 1.0)) throw ConfigError("lr_decay_ratio must lie in [0, 1]");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be > 0");
  OptimizerState{learning_rate, momentum, weight_decay, {}}.validate();
}

LrSchedule TrainConfig::schedule() const {
  return LrSchedule::step_at_fraction(learning_rate, epochs, lr_decay_ratio, lr_decay_factor);
}

TrainState TrainState::init(const TrainConfig& config, const Topology& topology,
                            std::span<const SkeletonSequence> fit_data) {
  config.validate();
  TrainState s;
  s.config = config;
  s.topology = topology;
  EncoderConfig enc = config.encoder;
  enc.has_cross_attention = true;
  for (auto m : config.modalities) {
    Rng init_rng(derive_seed(config.seed, kInitStream, static_cast<std::uint64_t>(m)));
    ModalityModels mm;
    mm.modality = m;
    mm.query = EncoderParams::init(enc, init_rng);
    if (config.normalize_inputs && !fit_data.empty()) {
      mm.query.input_norm = fit_input_normalization(fit_data, m, topology);
    }
    mm.key = mm.query.clone(false);
    s.models.push_back(std::move(mm));
  }
  s.optimizer.learning_rate = config.learning_rate;
  s.optimizer.momentum = config.momentum;
  s.optimizer.weight_decay = config.weight_decay;
  s.banks = BankGroup(config.modalities, config.bank_size, enc.projection_dim, enc.model_dim);
  s.rng.seed(derive_seed(config.seed, kShuffleStream));
  return s;
}

const ModalityModels& TrainState::models_for(Modality m) const {
  for (const auto& mm : models) {
    if (mm.modality == m) return mm;
  }
  throw ContractError("no encoder for modality " + std::string(modality_name(m)));
}

bool TrainState::key_gradients_empty() const {
  for (const auto& mm : models) {
    for (const auto& [name, t] : mm.key.named()) {
      if (t.has_grad() || t.requires_grad()) return false;
    }
  }
  return true;
}

std::optional<double> StepMetrics::component(const std::string& name) const {
  for (const auto& c : components) {
    if (c.name == name) return c.value;
  }
  return std::nullopt;
}

nlohmann::json StepMetrics::to_json() const {
  nlohmann::json j;
  j["type"] = "step";
  j["epoch"] = epoch;
  j["step"] = step;
  j["lr"] = lr;
  j["warmup"] = warmup;
  nlohmann::json losses = nlohmann::json::object();
  for (const auto& c : components) losses[c.name] = c.value;
  j["losses"] = losses;
  return j;
}

StepMetrics train_step(TrainState& state, std::span<const SkeletonSequence> batch) {
  const TrainConfig& cfg = state.config;
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (batch.size() > cfg.bank_size) throw ContractError("train_step: batch larger than the memory bank");
  const std::size_t b = batch.size();

  const std::uint64_t step_seed = derive_seed(cfg.seed, kAugmentStream, state.step);
  std::vector<SkeletonSequence> query_views, key_views;
  std::vector<std::uint64_t> tags;
  for (std::size_t i = 0; i < b; ++i) {
    Rng rq(derive_seed(step_seed, 0, 2 * i));
    Rng rk(derive_seed(step_seed, 0, 2 * i + 1));
    query_views.push_back(augment(batch[i], cfg.augment, rq));
    key_views.push_back(augment(batch[i], cfg.augment, rk));
    tags.push_back(batch[i].instance_id);
  }

  const std::size_t fill = state.banks.fill_count();
  const bool full = state.banks.full();
  const bool cluster_losses = !cfg.disable_imd && full;
  const bool cluster_keys = !cfg.disable_imd && fill >= cfg.k_d;
  InvariantMonitor* monitor = cfg.check_invariants ? &state.monitor : nullptr;

  std::vector<IntraModalTerms> intra;
  std::vector<DistillParty> parties;
  std::vector<BankWrite> writes;
  for (const auto& mm : state.models) {
    const Modality m = mm.modality;
    const MemoryBank& instance_bank = state.banks.bank(m, Branch::Instance);
    const MemoryBank& cluster_bank = state.banks.bank(m, Branch::Cluster);
    const auto qs = derive_all(query_views, m, state.topology);
    const auto ks = derive_all(key_views, m, state.topology);

    const Tensor tokens_q = gcn_forward(mm.query, pack_batch(qs), state.topology);
    const Tensor z_q = project(mm.query, transformer_forward(mm.query, tokens_q, b));
    const Tensor tokens_k = gcn_forward(mm.key, pack_batch(ks), state.topology);
    const Tensor h_k = transformer_forward(mm.key, tokens_k, b);
    const Tensor z_k = project(mm.key, h_k);
    if (monitor) {
      monitor->check_unit_rows(z_q);
      monitor->check_unit_rows(z_k);
    }

    IntraModalTerms terms;
    terms.modality = m;
    if (fill > 0) terms.scl = info_nce(z_q, z_k, instance_bank.keys_tensor(), cfg.temperatures.contrastive);

    Tensor z_k_star;
    if (cluster_keys) {
      const Tensor neighbors = neighbor_values(instance_bank, z_k, cfg.k_d);
      z_k_star = project(mm.key, transformer_forward(mm.key, tokens_k, b, &neighbors));
      if (monitor) monitor->check_unit_rows(z_k_star);
    }
    if (cluster_losses) {
      const Tensor neighbors = neighbor_values(instance_bank, z_q, cfg.k_d);
      const Tensor z_q_star = project(mm.query, transformer_forward(mm.query, tokens_q, b, &neighbors));
      if (monitor) monitor->check_unit_rows(z_q_star);
      terms.scl_cluster = cluster_info_nce(z_q_star, z_k_star, cluster_bank.keys_tensor(), cfg.temperatures.contrastive);
      terms.imd = imd_loss({z_q, z_k, &instance_bank}, {z_q_star, z_k_star, &cluster_bank}, cfg.k_c,
                           cfg.temperatures, monitor);
    }
    if (full && !cfg.disable_cmd) parties.push_back({z_q, z_k, &instance_bank});

    writes.push_back({m, Branch::Instance, z_k, h_k});
    // Until the cluster branch can run, its bank is filled with instance
    // keys so that every bank keeps the shared write schedule.
    writes.push_back({m, Branch::Cluster, z_k_star.defined() ? z_k_star : z_k, {}});
    intra.push_back(std::move(terms));
  }
  Tensor cmd;
  if (parties.size() >= 2) cmd = cmd_loss(parties, cfg.k_c, cfg.temperatures, monitor);

  StepMetrics metrics;
  metrics.epoch = state.epoch;
  metrics.step = state.step;
  metrics.lr = cfg.schedule().at(state.epoch);
  metrics.warmup = !full;

  const bool any_loss = cmd.defined() || std::any_of(intra.begin(), intra.end(), [](const IntraModalTerms& t) {
                          return t.scl.defined() || t.scl_cluster.defined() || t.imd.defined();
                        });
  if (any_loss) {
    TotalLoss total;
    try {
      total = total_loss(intra, cmd, cfg.weights.lambda_cmd);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(e.component(), "step " + std::to_string(state.step) + ": " + e.what());
    }
    metrics.components = std::move(total.components);
    total.total.backward();
    std::vector<NamedTensor> trainable;
    for (const auto& mm : state.models) {
      append_prefixed(trainable, cluster_losses ? mm.query.named() : mm.query.named_instance_branch(), mm.modality);
    }
    state.optimizer.learning_rate = metrics.lr;
    sgd_step(state.optimizer, trainable);
  }
  for (auto& mm : state.models) momentum_update(mm.key.named(), mm.query.named(), cfg.alpha);
  state.banks.enqueue_batch(writes, tags);
  ++state.step;
  return metrics;
}

nlohmann::json metrics_header(const TrainConfig& config) {
  nlohmann::json j;
  j["type"] = "header";
  j["version"] = 1;
  j["lambda_cmd"] = config.weights.lambda_cmd;
  j["tau_c"] = config.temperatures.contrastive;
  j["tau_t"] = config.temperatures.teacher;
  j["tau_s"] = config.temperatures.student;
  j["config"] = to_json(config);
  return j;
}

namespace {

void trim_metrics(const std::filesystem::path& path, std::size_t steps) {
  std::ifstream in(path);
  if (!in) throw IoError("resume: cannot read " + path.string());
  std::vector<std::string> kept;
  std::string line;
  while (kept.size() < steps + 1 && std::getline(in, line)) kept.push_back(line);
  if (kept.size() != steps + 1) throw IoError("resume: metrics log shorter than the checkpointed step count");
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
  if (!out) throw IoError("resume: cannot rewrite " + path.string());
}

}  // namespace

PretrainResult pretrain(const TrainConfig& config, const Dataset& data, const PretrainOptions& options) {
  config.validate();
  if (config.encoder.frames != data.frames()) {
    throw ConfigError("encoder frames " + std::to_string(config.encoder.frames) + " differ from dataset frames " +
                      std::to_string(data.frames()));
  }
  if (data.train.size() < config.batch_size) throw ConfigError("training split is smaller than one batch");
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);
  PretrainResult result;
  result.checkpoint = options.out_dir / kCheckpointFile;
  result.metrics_log = options.out_dir / kMetricsFile;

  TrainState state;
  if (options.resume) {
    state = load_checkpoint(result.checkpoint);
    if (to_json(state.config) != to_json(config)) throw ConfigError("resume: checkpoint config differs from the run config");
    if (!(state.topology == data.topology)) throw ConfigError("resume: checkpoint topology differs from the dataset");
    trim_metrics(result.metrics_log, state.step);
  } else {
    state = TrainState::init(config, data.topology, data.train);
    std::ofstream out(result.metrics_log, std::ios::trunc);
    out << metrics_header(config).dump() << '\n';
    if (!out) throw IoError("cannot write " + result.metrics_log.string());
    if (config.epochs == 0) save_checkpoint(state, result.checkpoint);
  }

  std::ofstream log(result.metrics_log, std::ios::app);
  if (!log) throw IoError("cannot append to " + result.metrics_log.string());
  const std::size_t steps_per_epoch = data.train.size() / config.batch_size;
  std::vector<std::size_t> order(data.train.size());
  std::vector<SkeletonSequence> batch;
  for (std::size_t e = state.epoch; e < config.epochs; ++e) {
    if (options.stop_after_epoch && e >= *options.stop_after_epoch) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      batch.clear();
      for (std::size_t i = 0; i < config.batch_size; ++i) batch.push_back(data.train[order[s * config.batch_size + i]]);
      StepMetrics m = train_step(state, batch);
      log << m.to_json().dump() << '\n';
      log.flush();
      if (options.on_step) options.on_step(m);
      ++result.steps_run;
    }
    state.epoch = e + 1;
    save_checkpoint(state, result.checkpoint);
    if (config.keep_epoch_checkpoints) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint-epoch-%04zu.ckpt", state.epoch);
      fs::copy_file(result.checkpoint, options.out_dir / name, fs::copy_options::overwrite_existing);
    }
    ++result.epochs_run;
  }
  if (!log) throw IoError("failed writing " + result.metrics_log.string());
  result.monitor = state.monitor;
  return result;
}

}  // namespace i2md
