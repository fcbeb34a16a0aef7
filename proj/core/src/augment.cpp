#include "i2md/augment.hpp"

#include <cmath>

#include "i2md/error.hpp"

namespace i2md {
namespace {

using Mat3 = std::array<double, 9>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      for (int q = 0; q < 3; ++q) c[r * 3 + q] += a[r * 3 + k] * b[k * 3 + q];
    }
  }
  return c;
}

void transform_points(SkeletonSequence& seq, const Mat3& m) {
  for (std::size_t p = 0; p < seq.frames * seq.joints; ++p) {
    double* v = seq.coords.data() + p * 3;
    const double x = v[0], y = v[1], z = v[2];
    v[0] = m[0] * x + m[1] * y + m[2] * z;
    v[1] = m[3] * x + m[4] * y + m[5] * z;
    v[2] = m[6] * x + m[7] * y + m[8] * z;
  }
}

Mat3 random_rotation(const std::array<double, 3>& max_rad, Rng& rng) {
  const double ax = uniform(rng, -max_rad[0], max_rad[0]);
  const double ay = uniform(rng, -max_rad[1], max_rad[1]);
  const double az = uniform(rng, -max_rad[2], max_rad[2]);
  const Mat3 rx{1, 0, 0, 0, std::cos(ax), -std::sin(ax), 0, std::sin(ax), std::cos(ax)};
  const Mat3 ry{std::cos(ay), 0, std::sin(ay), 0, 1, 0, -std::sin(ay), 0, std::cos(ay)};
  const Mat3 rz{std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0, 0, 0, 1};
  return multiply(rz, multiply(ry, rx));
}

SkeletonSequence temporal_crop(const SkeletonSequence& seq, double ratio, Rng& rng) {
  const std::size_t t_count = seq.frames;
  if (t_count < 2) return seq;
  const double last = static_cast<double>(t_count - 1);
  const double span = ratio * last;
  const double start = uniform(rng, 0.0, last - span);
  SkeletonSequence out(t_count, seq.joints, seq.label, seq.instance_id);
  const std::size_t stride = seq.joints * 3;
  for (std::size_t t = 0; t < t_count; ++t) {
    const double s = start + static_cast<double>(t) * (span / last);
    auto i0 = static_cast<std::size_t>(std::floor(s));
    double w = s - static_cast<double>(i0);
    if (i0 >= t_count - 1) {
      i0 = t_count - 1;
      w = 0.0;
    }
    const double* a = seq.coords.data() + i0 * stride;
    const double* b = seq.coords.data() + std::min(i0 + 1, t_count - 1) * stride;
    double* dst = out.coords.data() + t * stride;
    for (std::size_t i = 0; i < stride; ++i) dst[i] = (1.0 - w) * a[i] + w * b[i];
  }
  return out;
}

}  // namespace

void AugmentationConfig::validate() const {
  for (double r : rotation_max_rad) {
    if (!(r >= 0.0)) throw ConfigError("augmentation rotation_max_rad must be >= 0");
  }
  if (!(shear_max >= 0.0)) throw ConfigError("augmentation shear_max must be >= 0");
  if (!(crop_min_ratio > 0.0 && crop_min_ratio <= 1.0)) {
    throw ConfigError("augmentation crop_min_ratio must lie in (0, 1]");
  }
  if (!(jitter_std >= 0.0)) throw ConfigError("augmentation jitter_std must be >= 0");
}

AugmentationConfig AugmentationConfig::none() {
  AugmentationConfig c;
  c.rotation = c.shear = c.crop = c.jitter = false;
  return c;
}

SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& config, Rng& rng) {
  config.validate();
  SkeletonSequence out = seq;
  if (config.rotation) transform_points(out, random_rotation(config.rotation_max_rad, rng));
  if (config.shear) {
    Mat3 s{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (r != c) s[r * 3 + c] = uniform(rng, -config.shear_max, config.shear_max);
      }
    }
    transform_points(out, s);
  }
  if (config.crop) out = temporal_crop(out, uniform(rng, config.crop_min_ratio, 1.0), rng);
  if (config.jitter && config.jitter_std > 0.0) {
    std::normal_distribution<double> noise(0.0, config.jitter_std);
    for (auto& v : out.coords) v += noise(rng);
  }
  return out;
}

}  // namespace i2md
