#pragma once

#include <array>

#include "i2md/rng.hpp"
#include "i2md/skeleton.hpp"

namespace i2md {

/// Stochastic view generation for contrastive pretraining. Each stage can be
/// switched off independently; disabled stages draw no random numbers.
struct AugmentationConfig {
  std::array<double, 3> rotation_max_rad{0.3, 0.3, 0.3};  // per x/y/z axis
  double shear_max = 0.3;
  double crop_min_ratio = 0.8;  // in (0, 1]
  double jitter_std = 0.01;

  bool rotation = true;
  bool shear = true;
  bool crop = true;
  bool jitter = true;

  void validate() const;

  /// All stages disabled.
  static AugmentationConfig none();
};

/// Rotation, shear, temporal crop + linear resample to T frames, Gaussian
/// jitter, in that order. Deterministic given the generator state.
SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& config, Rng& rng);

}  // namespace i2md
