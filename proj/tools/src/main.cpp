// i2md: dataset generation, pretraining, evaluation, verification suites and
// embedding export.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime abort,
// 3 verification failure.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "i2md/config.hpp"
#include "i2md/dataset.hpp"
#include "i2md/error.hpp"
#include "i2md/eval.hpp"
#include "i2md/trainer.hpp"
#include "i2md/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace i2md;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerify = 3;
constexpr const char* kConfigEcho = "config.ini";

fs::path output_root() {
  if (const char* env = std::getenv("I2MD_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

struct GenerateArgs {
  fs::path config, out;
};

int cmd_generate(const GenerateArgs& a) {
  const RunConfig rc = load_run_config(a.config);
  const Dataset data = generate_dataset(rc.dataset);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  if (a.out.extension() == ".csv") {
    save_dataset_csv(data, a.out);
  } else {
    save_dataset(data, a.out);
  }
  std::printf("wrote %s\n", a.out.string().c_str());
  std::printf("classes=%zu train=%zu test=%zu frames=%zu joints=%zu\n", data.num_classes, data.train.size(),
              data.test.size(), data.frames(), data.topology.joint_count());
  std::printf("noise_std=%.6g rotation_max_rad=%.6g amplitude=%.6g seed=%llu\n", rc.dataset.noise_std,
              rc.dataset.rotation_max_rad, rc.dataset.amplitude, static_cast<unsigned long long>(rc.dataset.seed));
  return 0;
}

struct PretrainArgs {
  fs::path config, data, out;
  bool resume = false;
  std::vector<std::string> ablate;
  std::optional<std::size_t> stop_after_epoch;
  bool quiet = false;
};

int cmd_pretrain(const PretrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  for (const auto& name : a.ablate) apply_ablation(rc, name);
  rc.validate();
  fs::path out = a.out;
  if (out.empty()) out = rc.output_dir.empty() ? output_root() / a.config.stem() : rc.output_dir;
  const Dataset data = load_dataset(a.data);

  fs::create_directories(out);
  write_text(out / kConfigEcho, to_ini(rc));

  PretrainOptions opts;
  opts.out_dir = out;
  opts.resume = a.resume;
  opts.stop_after_epoch = a.stop_after_epoch;
  std::size_t last_epoch = static_cast<std::size_t>(-1);
  if (!a.quiet) {
    opts.on_step = [&](const StepMetrics& m) {
      if (m.epoch == last_epoch) return;
      last_epoch = m.epoch;
      std::printf("epoch %zu  lr=%.4g%s\n", m.epoch, m.lr, m.warmup ? "  (warm-up)" : "");
      std::fflush(stdout);
    };
  }
  const PretrainResult r = pretrain(rc.train, data, opts);
  std::printf("steps=%zu epochs=%zu\ncheckpoint %s\nmetrics %s\n", r.steps_run, r.epochs_run,
              r.checkpoint.string().c_str(), r.metrics_log.string().c_str());
  return 0;
}

struct EvalArgs {
  fs::path checkpoint, data, config, out;
  std::string protocol = "knn";
  std::string modality = "joint";
};

const ModalityModels& checked_models(const TrainState& state, const Dataset& data, Modality m) {
  if (!(state.topology == data.topology)) throw ConfigError("checkpoint topology does not match the dataset");
  if (state.config.encoder.frames != data.frames()) {
    throw ConfigError("checkpoint encoder expects " + std::to_string(state.config.encoder.frames) +
                      " frames, dataset has " + std::to_string(data.frames()));
  }
  return state.models_for(m);
}

int cmd_eval(const EvalArgs& a) {
  if (a.protocol != "knn" && a.protocol != "linear") throw ConfigError("protocol must be knn or linear");
  const TrainState state = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  const Modality m = parse_modality(a.modality);
  const auto& mm = checked_models(state, data, m);
  LinearProbeConfig probe;
  if (!a.config.empty()) probe = load_run_config(a.config).probe;

  const std::string tag = std::string(modality_name(m)) + "/idb/";
  const FeatureSet train = extract_features(mm.query, data.train, m, data.topology, tag + "train");
  const FeatureSet test = extract_features(mm.query, data.test, m, data.topology, tag + "test");
  nlohmann::json record;
  record["protocol"] = a.protocol;
  record["modality"] = std::string(modality_name(m));
  if (a.protocol == "knn") {
    record["accuracy"] = knn_eval(train, test);
  } else {
    const LinearProbeResult r = linear_probe(train, test, probe);
    record["accuracy"] = r.accuracy;
    record["probe_losses"] = r.epoch_losses;
    record["probe"] = {{"epochs", probe.epochs},        {"learning_rate", probe.learning_rate},
                       {"milestones", probe.milestones}, {"decay_factor", probe.decay_factor},
                       {"batch_size", probe.batch_size}, {"momentum", probe.momentum},
                       {"weight_decay", probe.weight_decay}, {"standardize", probe.standardize},
                       {"seed", probe.seed}};
  }
  record["seed"] = state.config.seed;
  record["epoch"] = state.epoch;
  record["step"] = state.step;
  record["checkpoint"] = a.checkpoint.string();
  record["data"] = a.data.string();
  record["config"] = to_json(state.config);

  const fs::path out =
      a.out.empty() ? a.checkpoint.parent_path() / ("eval-" + a.protocol + "-" + a.modality + ".json") : a.out;
  write_text(out, record.dump(2) + "\n");
  std::printf("%s top1=%.6f\nrecord %s\n", a.protocol.c_str(), record["accuracy"].get<double>(), out.string().c_str());
  return 0;
}

int cmd_verify(const std::string& suite) {
  const auto report = verify::run_suite(suite);
  verify::print_report(std::cout, report);
  return report.passed() ? 0 : kExitVerify;
}

struct ExportArgs {
  fs::path checkpoint, data, out;
  std::string modality = "joint";
};

int cmd_export(const ExportArgs& a) {
  const TrainState state = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  const Modality m = parse_modality(a.modality);
  const auto& mm = checked_models(state, data, m);
  std::vector<SkeletonSequence> all = data.train;
  all.insert(all.end(), data.test.begin(), data.test.end());
  const FeatureSet f = extract_features(mm.query, all, m, data.topology, std::string(modality_name(m)) + "/idb/all");
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_features_csv(f, a.out);
  std::printf("wrote %zu rows of dim %zu to %s\n", f.count(), f.dim, a.out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale skeleton representation learning with mutual distillation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "Generate the synthetic skeleton dataset");
  g->add_option("--config", gen.config, "Run config (INI)")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Dataset file (.csv for text, binary otherwise)")->required();

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Self-supervised pretraining");
  p->add_option("--config", pre.config, "Run config (INI)")->required()->check(CLI::ExistingFile);
  p->add_option("--data", pre.data, "Dataset file")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pre.out, "Run directory (default: config output_dir, else $I2MD_OUTPUT_ROOT/<config>)");
  p->add_flag("--resume", pre.resume, "Continue from the run directory's checkpoint");
  p->add_option("--ablate", pre.ablate, "disable_cmd, disable_imd or scl_only")
      ->check(CLI::IsMember({"disable_cmd", "disable_imd", "scl_only"}));
  p->add_option("--stop-after-epoch", pre.stop_after_epoch, "Stop once this many epochs are checkpointed");
  p->add_flag("--quiet", pre.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint's frozen features");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset file")->required()->check(CLI::ExistingFile);
  e->add_option("--protocol", ev.protocol, "knn or linear")->check(CLI::IsMember({"knn", "linear"}));
  e->add_option("--modality", ev.modality, "joint, motion or bone")->check(CLI::IsMember({"joint", "motion", "bone"}));
  e->add_option("--config", ev.config, "Run config for [eval] probe settings")->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Result record (default: next to the checkpoint)");

  std::string suite;
  auto* v = app.add_subcommand("verify", "Run a property suite");
  v->add_option("--suite", suite, "gradients, eq6 or oracles")
      ->required()
      ->check(CLI::IsMember({"gradients", "eq6", "oracles"}));

  ExportArgs ex;
  auto* x = app.add_subcommand("export-embeddings", "Write train+test features as CSV");
  x->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  x->add_option("--data", ex.data, "Dataset file")->required()->check(CLI::ExistingFile);
  x->add_option("--out", ex.out, "CSV path")->required();
  x->add_option("--modality", ex.modality, "joint, motion or bone")->check(CLI::IsMember({"joint", "motion", "bone"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*p) return cmd_pretrain(pre);
    if (*e) return cmd_eval(ev);
    if (*v) return cmd_verify(suite);
    if (*x) return cmd_export(ex);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitUsage;
  } catch (const NonFiniteError& err) {
    std::fprintf(stderr, "aborted: non-finite %s (%s)\n", err.component().c_str(), err.what());
    return kExitRuntime;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
