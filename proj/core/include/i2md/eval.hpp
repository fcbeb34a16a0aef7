#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "i2md/encoder.hpp"
#include "i2md/skeleton.hpp"

namespace i2md {

/// Row-major [count, dim] feature matrix with one label per row.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::string source;  // e.g. "joint/idb/train"

  std::size_t count() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  void validate() const;
};

/// Pooled hidden embeddings h of the instance branch (no cross-attention)
/// for each sequence after deriving `modality`. No augmentation; the
/// parameters are read through a gradient-free copy.
FeatureSet extract_features(const EncoderParams& params, std::span<const SkeletonSequence> sequences,
                            Modality modality, const Topology& topology, const std::string& source = "",
                            std::size_t batch_size = 64);

/// 1-NN labels by cosine similarity; ties go to the lower training index.
std::vector<int> knn_predict(const FeatureSet& train, const FeatureSet& test);
/// Fraction of test rows whose nearest training row has the same label.
double knn_eval(const FeatureSet& train, const FeatureSet& test);

struct LinearProbeConfig {
  std::size_t epochs = 40;
  double learning_rate = 0.1;
  std::vector<std::size_t> milestones{25, 35};
  double decay_factor = 0.1;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool standardize = true;  // z-score with training-split statistics
  std::uint64_t seed = 1;

  void validate() const;
};

struct LinearProbeResult {
  double accuracy = 0.0;
  std::vector<double> epoch_losses;  // mean minibatch cross-entropy per epoch
};

/// Single linear layer + softmax cross-entropy trained with minibatch SGD on
/// frozen features.
LinearProbeResult linear_probe(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& config);

/// `# i2md-features dim=<C> count=<n> source=<tag>` then `label,f0,...` rows.
void write_features_csv(const FeatureSet& features, const std::filesystem::path& path);
FeatureSet read_features_csv(const std::filesystem::path& path);

}  // namespace i2md
