#pragma once

// Straight-line reference implementations. They share no code with the core
// library beyond plain containers: no Tensor ops, no MemoryBank.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <utility>
#include <vector>

namespace i2md::verify {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

double dot(const Vec& a, const Vec& b);

/// Full sort of every similarity; ties by lower index.
std::vector<std::size_t> brute_force_top_k(const Rows& keys, const Vec& query, std::size_t k);

/// List model of a FIFO queue of (tag, key) entries.
class FifoOracle {
 public:
  explicit FifoOracle(std::size_t capacity) : capacity_(capacity) {}
  void push(std::uint64_t tag, Vec key);
  /// Oldest first.
  const std::deque<std::pair<std::uint64_t, Vec>>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<std::pair<std::uint64_t, Vec>> entries_;
};

/// 1-NN with explicit cosine similarity; first maximum wins.
std::vector<int> brute_force_knn(const Rows& train, const std::vector<int>& train_labels, const Rows& test);

/// Mean over rows of -log softmax([q.k, q.m_1, ...] / tau)[0].
double reference_info_nce(const Rows& queries, const Rows& keys, const Rows& negatives, double tau);

/// softmax(z . anchors / tau)
Vec reference_distribution(const Vec& z, const Rows& anchors, double tau);

/// sum p log(p/q), logs floored at 1e-12.
double reference_kl(const Vec& p, const Vec& q);

/// One distillation direction averaged over rows: teacher top-K slots in
/// `teacher_bank`, student distribution over the same slots of `student_bank`.
double reference_md_loss(const Rows& teacher_keys, const Rows& teacher_bank, const Rows& student_queries,
                         const Rows& student_bank, std::size_t k, double tau_t, double tau_s);

}  // namespace i2md::verify
