#include "i2md/skeleton.hpp"

#include <cmath>

#include "i2md/error.hpp"

namespace i2md {

Topology::Topology(std::vector<int> parents) : parents_(std::move(parents)) {
  const std::size_t j = parents_.size();
  if (j == 0) throw ContractError("topology needs at least one joint");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < j; ++i) {
    const int p = parents_[i];
    if (p == -1) {
      ++roots;
      root_ = i;
    } else if (p < 0 || static_cast<std::size_t>(p) >= j || static_cast<std::size_t>(p) == i) {
      throw ContractError("topology: joint " + std::to_string(i) + " has invalid parent " + std::to_string(p));
    }
  }
  if (roots != 1) throw ContractError("topology must have exactly one root, found " + std::to_string(roots));
  for (std::size_t i = 0; i < j; ++i) {
    std::size_t steps = 0;
    for (int cur = static_cast<int>(i); cur != -1; cur = parents_[static_cast<std::size_t>(cur)]) {
      if (++steps > j) throw ContractError("topology: parent links contain a cycle");
    }
  }

  adjacency_.assign(j * j, 0.0);
  for (std::size_t i = 0; i < j; ++i) {
    adjacency_[i * j + i] = 1.0;
    if (parents_[i] >= 0) {
      const auto p = static_cast<std::size_t>(parents_[i]);
      adjacency_[i * j + p] = 1.0;
      adjacency_[p * j + i] = 1.0;
    }
  }
  std::vector<double> inv_sqrt_deg(j);
  for (std::size_t r = 0; r < j; ++r) {
    double deg = 0.0;
    for (std::size_t c = 0; c < j; ++c) deg += adjacency_[r * j + c];
    inv_sqrt_deg[r] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> norm(j * j);
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t c = 0; c < j; ++c) norm[r * j + c] = inv_sqrt_deg[r] * adjacency_[r * j + c] * inv_sqrt_deg[c];
  }
  normalized_ = Tensor({j, j}, std::move(norm));
}

Topology Topology::humanoid9() { return Topology({-1, 0, 1, 1, 3, 1, 5, 0, 0}); }

SkeletonSequence::SkeletonSequence(std::size_t frames_, std::size_t joints_, int label_, std::uint64_t instance_id_)
    : frames(frames_), joints(joints_), coords(frames_ * joints_ * 3, 0.0), label(label_), instance_id(instance_id_) {}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Joint:
      return "joint";
    case Modality::Motion:
      return "motion";
    case Modality::Bone:
      return "bone";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  for (auto m : kAllModalities) {
    if (modality_name(m) == name) return m;
  }
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

SkeletonSequence to_motion(const SkeletonSequence& seq) {
  if (seq.frames < 2) throw ContractError("to_motion requires at least 2 frames");
  SkeletonSequence out(seq.frames, seq.joints, seq.label, seq.instance_id);
  const std::size_t stride = seq.joints * 3;
  for (std::size_t t = 1; t < seq.frames; ++t) {
    for (std::size_t i = 0; i < stride; ++i) {
      out.coords[t * stride + i] = seq.coords[t * stride + i] - seq.coords[(t - 1) * stride + i];
    }
  }
  return out;
}

SkeletonSequence to_bone(const SkeletonSequence& seq, const Topology& topology) {
  if (topology.joint_count() != seq.joints) {
    throw ContractError("to_bone: topology has " + std::to_string(topology.joint_count()) +
                        " joints, sequence has " + std::to_string(seq.joints));
  }
  SkeletonSequence out(seq.frames, seq.joints, seq.label, seq.instance_id);
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t j = 0; j < seq.joints; ++j) {
      const int p = topology.parent(j);
      if (p < 0) continue;
      for (std::size_t a = 0; a < 3; ++a) {
        out.at(t, j, a) = seq.at(t, j, a) - seq.at(t, static_cast<std::size_t>(p), a);
      }
    }
  }
  return out;
}

SkeletonSequence derive_modality(const SkeletonSequence& seq, Modality modality, const Topology& topology) {
  switch (modality) {
    case Modality::Joint:
      return seq;
    case Modality::Motion:
      return to_motion(seq);
    case Modality::Bone:
      return to_bone(seq, topology);
  }
  throw ContractError("unknown modality");
}

Tensor pack_batch(std::span<const SkeletonSequence> batch) {
  if (batch.empty()) throw ContractError("pack_batch: empty batch");
  const std::size_t frames = batch.front().frames;
  const std::size_t joints = batch.front().joints;
  std::vector<double> data;
  data.reserve(batch.size() * frames * joints * 3);
  for (const auto& s : batch) {
    if (s.frames != frames || s.joints != joints) throw DimensionError("pack_batch: mixed sequence shapes");
    data.insert(data.end(), s.coords.begin(), s.coords.end());
  }
  return Tensor({batch.size() * frames * joints, 3}, std::move(data));
}

}  // namespace i2md
