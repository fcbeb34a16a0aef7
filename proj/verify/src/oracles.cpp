#include "i2md/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace i2md::verify {

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::size_t> brute_force_top_k(const Rows& keys, const Vec& query, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < keys.size(); ++i) scored.emplace_back(dot(query, keys[i]), i);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k && i < scored.size(); ++i) out.push_back(scored[i].second);
  return out;
}

void FifoOracle::push(std::uint64_t tag, Vec key) {
  entries_.emplace_back(tag, std::move(key));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<int> brute_force_knn(const Rows& train, const std::vector<int>& train_labels, const Rows& test) {
  auto unit = [](Vec v) {
    const double n = std::sqrt(dot(v, v));
    for (auto& x : v) x /= n;
    return v;
  };
  Rows train_unit;
  for (const auto& r : train) train_unit.push_back(unit(r));
  std::vector<int> out;
  for (const auto& raw : test) {
    const Vec t = unit(raw);
    double best = -2.0;
    int label = -1;
    for (std::size_t i = 0; i < train_unit.size(); ++i) {
      const double cos = dot(t, train_unit[i]);
      if (cos > best) {
        best = cos;
        label = train_labels[i];
      }
    }
    out.push_back(label);
  }
  return out;
}

double reference_info_nce(const Rows& queries, const Rows& keys, const Rows& negatives, double tau) {
  double total = 0.0;
  for (std::size_t r = 0; r < queries.size(); ++r) {
    std::vector<double> logits{dot(queries[r], keys[r]) / tau};
    for (const auto& m : negatives) logits.push_back(dot(queries[r], m) / tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[0] - mx - std::log(z));
  }
  return total / static_cast<double>(queries.size());
}

Vec reference_distribution(const Vec& z, const Rows& anchors, double tau) {
  Vec logits;
  for (const auto& a : anchors) logits.push_back(dot(z, a) / tau);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (auto& l : logits) s += (l = std::exp(l - mx));
  for (auto& l : logits) l /= s;
  return logits;
}

double reference_kl(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * (std::log(std::max(p[i], 1e-12)) - std::log(std::max(q[i], 1e-12)));
  return s;
}

double reference_md_loss(const Rows& teacher_keys, const Rows& teacher_bank, const Rows& student_queries,
                         const Rows& student_bank, std::size_t k, double tau_t, double tau_s) {
  double total = 0.0;
  for (std::size_t r = 0; r < teacher_keys.size(); ++r) {
    const auto slots = brute_force_top_k(teacher_bank, teacher_keys[r], k);
    Rows ta, sa;
    for (auto s : slots) {
      ta.push_back(teacher_bank[s]);
      sa.push_back(student_bank[s]);
    }
    total += reference_kl(reference_distribution(teacher_keys[r], ta, tau_t),
                          reference_distribution(student_queries[r], sa, tau_s));
  }
  return total / static_cast<double>(teacher_keys.size());
}

}  // namespace i2md::verify
