#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "i2md/memory_bank.hpp"
#include "i2md/skeleton.hpp"
#include "i2md/tensor.hpp"

namespace i2md {

struct TemperatureSet {
  double contrastive = 0.07;  // tau_c
  double teacher = 0.05;      // tau_t
  double student = 0.1;       // tau_s

  void validate() const;
};

struct LossWeights {
  double lambda_cmd = 0.5;  // lambda_1

  void validate() const;
};

/// Runtime checks on the quantities the objective relies on. Each check
/// throws ContractError on violation and otherwise records the worst
/// deviation seen, so a finished run can report how close it came.
class InvariantMonitor {
 public:
  static constexpr double kSumTol = 1e-9;
  static constexpr double kKlFloor = -1e-12;
  static constexpr double kUnitNormTol = 1e-9;

  /// Rows of a [B, K] probability matrix: entries > 0, sums within kSumTol.
  void check_distribution(const Tensor& probs);
  void check_kl(std::span<const double> values);
  void check_unit_rows(const Tensor& embeddings);

  std::size_t distributions_checked() const { return distributions_; }
  std::size_t kl_values_checked() const { return kl_values_; }
  std::size_t embeddings_checked() const { return embeddings_; }
  double max_sum_error() const { return max_sum_error_; }
  double min_probability() const { return min_probability_; }
  double min_kl() const { return min_kl_; }
  double max_norm_error() const { return max_norm_error_; }

 private:
  std::size_t distributions_ = 0;
  std::size_t kl_values_ = 0;
  std::size_t embeddings_ = 0;
  double max_sum_error_ = 0.0;
  double min_probability_ = 1.0;
  double min_kl_ = 0.0;
  double max_norm_error_ = 0.0;
};

/// Softmax over anchor similarities. `probs` is [B, K]; row b is the
/// distribution of sample b over the bank slots in `anchors[b]`.
struct SimilarityDistribution {
  Tensor probs;
  std::vector<std::vector<std::size_t>> anchors;
  double temperature = 1.0;
};

/// Mean over the batch of -log(exp(q.k/tau) / (exp(q.k/tau) + sum_i exp(q.m_i/tau))).
/// `z_k` and `negatives` ([N, C']) are detached; only `z_q` receives a gradient.
Tensor info_nce(const Tensor& z_q, const Tensor& z_k, const Tensor& negatives, double tau);

/// Same objective over cluster-branch embeddings and the cluster bank keys.
Tensor cluster_info_nce(const Tensor& z_q_star, const Tensor& z_k_star, const Tensor& cluster_negatives, double tau);

/// `z` is [B, C']; `anchor_embeddings` is either [K, C'] (shared by all rows)
/// or [B, K, C'] (one anchor set per row). Throws ContractError for tau <= 0.
SimilarityDistribution similarity_distribution(const Tensor& z, const Tensor& anchor_embeddings,
                                               std::vector<std::vector<std::size_t>> anchors, double tau);

/// Distribution of each row of `z` over the listed slots of `bank`.
SimilarityDistribution similarity_distribution(const Tensor& z, const MemoryBank& bank,
                                               std::vector<std::vector<std::size_t>> anchors, double tau);

/// Per-row KL(p || q) = sum_i p_i (log p_i - log q_i), both logs floored at
/// 1e-12. `p` is treated as a constant. Anchor lists must match exactly.
Tensor kl_div_rows(const SimilarityDistribution& p, const SimilarityDistribution& q);
/// Batch mean of kl_div_rows.
Tensor kl_div(const SimilarityDistribution& p, const SimilarityDistribution& q);

/// One distillation direction: the teacher key picks its top-K anchors in
/// its own bank; the student query is compared with the same slots of the
/// student bank. Banks must be slot-synchronized and hold >= k entries.
Tensor md_loss(const Tensor& teacher_key, const MemoryBank& teacher_bank, const Tensor& student_query,
               const MemoryBank& student_bank, std::size_t k, double tau_t, double tau_s,
               InvariantMonitor* monitor = nullptr);

/// Query/key embeddings of one party in a mutual distillation, with the bank
/// its anchors come from.
struct DistillParty {
  Tensor query;
  Tensor key;
  const MemoryBank* bank = nullptr;
};

/// Bidirectional: md(a.key -> b.query) + md(b.key -> a.query).
Tensor mutual_distillation(const DistillParty& a, const DistillParty& b, std::size_t k, const TemperatureSet& temps,
                           InvariantMonitor* monitor = nullptr);

/// Sum of mutual_distillation over the modality pairs (0,1), (1,2), (2,0)
/// for three parties, (0,1) for two, nothing for one.
Tensor cmd_loss(std::span<const DistillParty> modalities, std::size_t k, const TemperatureSet& temps,
                InvariantMonitor* monitor = nullptr);

/// Instance/cluster branch distillation inside one modality. Same code path
/// as mutual_distillation(idb, cdb).
Tensor imd_loss(const DistillParty& idb, const DistillParty& cdb, std::size_t k, const TemperatureSet& temps,
                InvariantMonitor* monitor = nullptr);

/// Loss terms of one modality. Undefined tensors are treated as absent.
struct IntraModalTerms {
  Modality modality = Modality::Joint;
  Tensor scl;
  Tensor scl_cluster;
  Tensor imd;
};

struct LossComponent {
  std::string name;
  double value = 0.0;
};

struct TotalLoss {
  Tensor total;
  std::vector<LossComponent> components;
};

/// sum over modalities (scl + scl_cluster + imd) + lambda * cmd. Throws
/// NonFiniteError naming the first non-finite component.
TotalLoss total_loss(std::span<const IntraModalTerms> intra, const Tensor& cmd, double lambda);

struct PositiveMiningReport {
  std::vector<double> epsilons;
  std::vector<double> md_values;
  std::vector<double> abs_diff;
  double closed_form = 0.0;
  std::size_t mined_slot = 0;
  bool monotone = false;
  bool passed = false;  // monotone and abs_diff.back() < kDegenerationTolerance
};

inline constexpr double kDegenerationTolerance = 1e-3;

/// Low-temperature limit of md_loss with K = N: the teacher distribution
/// collapses onto its most similar slot u and the loss becomes
/// -log softmax(student_query . student_bank / tau_s)[u]. Single-row inputs.
/// Throws ContractError when the teacher's best two similarities tie.
double positive_mining_loss(const Tensor& teacher_key, const MemoryBank& teacher_bank, const Tensor& student_query,
                            const MemoryBank& student_bank, double tau_s, std::size_t* mined_slot = nullptr);

PositiveMiningReport positive_mining_equivalence_check(const Tensor& teacher_key, const MemoryBank& teacher_bank,
                                                       const Tensor& student_query, const MemoryBank& student_bank,
                                                       double tau_s,
                                                       std::vector<double> epsilons = {1e-2, 1e-3, 1e-4});

}  // namespace i2md
