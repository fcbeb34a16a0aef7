#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "i2md/skeleton.hpp"

namespace i2md {

/// Synthetic action dataset. Every class owns a prototype motion made of
/// per-joint sinusoids; instances are the prototype under a random rotation
/// about the vertical axis plus i.i.d. Gaussian coordinate noise.
struct DatasetConfig {
  std::size_t num_classes = 8;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 25;
  std::size_t frames = 32;
  Topology topology = Topology::humanoid9();
  double noise_std = 0.05;
  double rotation_max_rad = 0.6;
  double amplitude = 0.25;  // peak sinusoid amplitude per axis
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  Topology topology;
  std::size_t num_classes = 0;
  std::vector<SkeletonSequence> train;
  std::vector<SkeletonSequence> test;

  std::size_t frames() const;
};

/// Deterministic in `config.seed`. Instance ids are unique across splits
/// (train first, then test).
Dataset generate_dataset(const DatasetConfig& config);

/// Binary container: magic, version, J, T, classes, split counts, parent
/// array, then per sequence label + instance id + row-major f64 coordinates.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Text variant for inspection; values are printed with 17 significant
/// digits so it also round-trips exactly.
void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);
/// Reads either format (detected from the first bytes).
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace i2md
