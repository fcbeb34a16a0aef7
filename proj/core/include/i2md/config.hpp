#pragma once

#include <filesystem>
#include <string>

#include "i2md/dataset.hpp"
#include "i2md/eval.hpp"
#include "i2md/trainer.hpp"

namespace i2md {

/// Everything a run needs, read from an INI file with the sections
/// [dataset], [augment], [encoder], [loss], [train], [eval] and [run].
/// Missing keys keep their defaults; unknown sections or keys and
/// malformed values are errors.
struct RunConfig {
  DatasetConfig dataset;
  TrainConfig train;
  LinearProbeConfig probe;
  std::string encoder_preset = "desk";
  std::filesystem::path output_dir;  // empty: $I2MD_OUTPUT_ROOT or ./runs

  void validate() const;
};

RunConfig parse_run_config(const std::string& ini_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config in the same INI dialect; parsing it back yields an
/// identical RunConfig.
std::string to_ini(const RunConfig& config);

/// `--ablate` names: "disable_cmd", "disable_imd", "scl_only" (both).
void apply_ablation(RunConfig& config, const std::string& name);

}  // namespace i2md
