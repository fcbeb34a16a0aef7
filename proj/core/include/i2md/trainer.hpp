#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "i2md/augment.hpp"
#include "i2md/dataset.hpp"
#include "i2md/encoder.hpp"
#include "i2md/losses.hpp"
#include "i2md/memory_bank.hpp"
#include "i2md/optimizer.hpp"
#include "i2md/rng.hpp"

namespace i2md {

struct TrainConfig {
  std::vector<Modality> modalities{Modality::Joint, Modality::Motion, Modality::Bone};
  EncoderConfig encoder;
  AugmentationConfig augment;
  TemperatureSet temperatures;
  LossWeights weights;

  std::size_t bank_size = 512;  // N
  std::size_t k_c = 128;        // distillation anchors
  std::size_t k_d = 16;         // retrieved neighbors for the cluster branch
  double alpha = 0.99;          // key-encoder momentum

  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay_ratio = 0.8;  // single x0.1 decay at floor(ratio * epochs)
  double lr_decay_factor = 0.1;

  bool disable_cmd = false;  // lambda_1 term dropped
  bool disable_imd = false;  // cluster branch, its InfoNCE and IMD dropped
  bool normalize_inputs = true;  // per-(joint, axis) standardization fitted on the training split
  bool check_invariants = true;
  bool keep_epoch_checkpoints = false;

  std::uint64_t seed = 1;

  void validate() const;
  LrSchedule schedule() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct ModalityModels {
  Modality modality = Modality::Joint;
  EncoderParams query;  // theta_q, trained by SGD
  EncoderParams key;    // theta_k, momentum copy, never requires grad
};

struct TrainState {
  TrainConfig config;
  Topology topology = Topology::humanoid9();
  std::vector<ModalityModels> models;
  OptimizerState optimizer;
  BankGroup banks;
  std::size_t epoch = 0;  // epochs completed
  std::size_t step = 0;   // steps completed
  Rng rng;                // batch shuffling
  InvariantMonitor monitor;

  /// Fresh state: per-modality parameters are drawn from streams derived
  /// from (seed, modality), so a modality's initialization does not depend
  /// on which other modalities are trained. With `normalize_inputs`, each
  /// modality's input standardization is fitted on `fit_data`; an empty span
  /// leaves it unset (load_checkpoint restores it from the file).
  static TrainState init(const TrainConfig& config, const Topology& topology,
                         std::span<const SkeletonSequence> fit_data = {});

  const ModalityModels& models_for(Modality m) const;

  /// True when no key-encoder parameter holds a gradient buffer.
  bool key_gradients_empty() const;
};

struct StepMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  bool warmup = true;  // banks not yet full: only instance InfoNCE terms
  std::vector<LossComponent> components;

  std::optional<double> component(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// One optimization step on `batch`: two augmented views per sample, all
/// configured modalities, both branches, loss, SGD, momentum update and a
/// synchronized enqueue into every bank.
StepMetrics train_step(TrainState& state, std::span<const SkeletonSequence> batch);

nlohmann::json metrics_header(const TrainConfig& config);

struct PretrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  /// Stop after this many epochs in total (simulates an interrupted run).
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const StepMetrics&)> on_step;
};

struct PretrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::size_t epochs_run = 0;
  std::size_t steps_run = 0;
  InvariantMonitor monitor;  // checks made during this call
};

inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kMetricsFile = "metrics.jsonl";

/// Runs epochs with drop-last batching, writes one JSON line per step to
/// metrics.jsonl (after a header line) and an atomic checkpoint after each
/// epoch. With `resume`, continues from out_dir/checkpoint.ckpt and trims
/// the metrics log to the checkpointed step. With zero epochs, only the
/// initial checkpoint is written.
PretrainResult pretrain(const TrainConfig& config, const Dataset& data, const PretrainOptions& options);

/// Full state: config echo, topology, counters, RNG, optimizer, all encoder
/// parameters and banks. Written to a temp file and renamed into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace i2md
