#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "i2md/tensor.hpp"

namespace i2md {

/// Kinematic tree over J joints. Adjacency is symmetric with self-loops.
class Topology {
 public:
  /// `parents[j]` is the parent joint of j, or -1 for the single root.
  explicit Topology(std::vector<int> parents);

  /// 9-joint stick figure: pelvis, chest, head, two arms (elbow, hand), two feet.
  static Topology humanoid9();

  std::size_t joint_count() const { return parents_.size(); }
  std::size_t root() const { return root_; }
  int parent(std::size_t joint) const { return parents_.at(joint); }
  const std::vector<int>& parents() const { return parents_; }

  /// J x J 0/1 matrix, A + I.
  const std::vector<double>& adjacency() const { return adjacency_; }
  /// D^{-1/2} (A + I) D^{-1/2} as a constant [J, J] tensor.
  const Tensor& normalized_adjacency() const { return normalized_; }

  bool operator==(const Topology& other) const { return parents_ == other.parents_; }

 private:
  std::vector<int> parents_;
  std::size_t root_ = 0;
  std::vector<double> adjacency_;
  Tensor normalized_;
};

/// T x J x 3 joint coordinates, row-major (frame, joint, axis).
struct SkeletonSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> coords;
  int label = 0;
  std::uint64_t instance_id = 0;

  SkeletonSequence() = default;
  SkeletonSequence(std::size_t frames, std::size_t joints, int label = 0, std::uint64_t instance_id = 0);

  double& at(std::size_t t, std::size_t j, std::size_t axis) { return coords[(t * joints + j) * 3 + axis]; }
  double at(std::size_t t, std::size_t j, std::size_t axis) const { return coords[(t * joints + j) * 3 + axis]; }

  bool operator==(const SkeletonSequence&) const = default;
};

enum class Modality { Joint = 0, Motion = 1, Bone = 2 };

inline constexpr Modality kAllModalities[] = {Modality::Joint, Modality::Motion, Modality::Bone};

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// motion[t] = frames[t] - frames[t-1], motion[0] = 0. Requires T >= 2.
SkeletonSequence to_motion(const SkeletonSequence& seq);
/// bone[t][j] = frames[t][j] - frames[t][parent(j)], root bone = 0.
SkeletonSequence to_bone(const SkeletonSequence& seq, const Topology& topology);
SkeletonSequence derive_modality(const SkeletonSequence& seq, Modality modality, const Topology& topology);

/// Stacks sequences into a [B*T*J, 3] tensor (encoder input layout).
Tensor pack_batch(std::span<const SkeletonSequence> batch);

}  // namespace i2md
