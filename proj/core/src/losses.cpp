#include "i2md/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "i2md/error.hpp"
#include "i2md/ops.hpp"

namespace i2md {
namespace {

void require_positive_tau(double tau, const char* what) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ContractError(std::string(what) + ": temperature must be > 0, got " + std::to_string(tau));
  }
}

void require_rows(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a [B, C] tensor, got " +
                         (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

void require_synchronized(const MemoryBank& a, const MemoryBank& b) {
  if (&a == &b) return;
  if (a.fill_count() != b.fill_count() || a.key_dim() != b.key_dim()) {
    throw ContractError("distillation banks are not synchronized (fill " + std::to_string(a.fill_count()) + " vs " +
                        std::to_string(b.fill_count()) + ")");
  }
  for (std::size_t s = 0; s < a.fill_count(); ++s) {
    if (a.tag(s) != b.tag(s)) {
      throw ContractError("distillation banks disagree on the source of slot " + std::to_string(s));
    }
  }
}

}  // namespace

void TemperatureSet::validate() const {
  require_positive_tau(contrastive, "tau_c");
  require_positive_tau(teacher, "tau_t");
  require_positive_tau(student, "tau_s");
}

void LossWeights::validate() const {
  if (!(lambda_cmd >= 0.0) || !std::isfinite(lambda_cmd)) throw ConfigError("lambda_cmd must be finite and >= 0");
}

void InvariantMonitor::check_distribution(const Tensor& probs) {
  require_rows(probs, "check_distribution");
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  const auto d = probs.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double p = d[r * k + i];
      if (!(p > 0.0)) throw ContractError("invariant violated: similarity distribution has entry " + std::to_string(p));
      min_probability_ = std::min(min_probability_, p);
      s += p;
    }
    const double err = std::abs(s - 1.0);
    if (!(err <= kSumTol)) throw ContractError("invariant violated: similarity distribution sums to " + std::to_string(s));
    max_sum_error_ = std::max(max_sum_error_, err);
    ++distributions_;
  }
}

void InvariantMonitor::check_kl(std::span<const double> values) {
  for (double v : values) {
    if (!(v >= kKlFloor)) throw ContractError("invariant violated: KL value " + std::to_string(v));
    min_kl_ = std::min(min_kl_, v);
    ++kl_values_;
  }
}

void InvariantMonitor::check_unit_rows(const Tensor& embeddings) {
  require_rows(embeddings, "check_unit_rows");
  const std::size_t rows = embeddings.dim(0), c = embeddings.dim(1);
  const auto d = embeddings.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < c; ++i) sq += d[r * c + i] * d[r * c + i];
    const double err = std::abs(std::sqrt(sq) - 1.0);
    if (!(err <= kUnitNormTol)) throw ContractError("invariant violated: embedding norm " + std::to_string(std::sqrt(sq)));
    max_norm_error_ = std::max(max_norm_error_, err);
    ++embeddings_;
  }
}

Tensor info_nce(const Tensor& z_q, const Tensor& z_k, const Tensor& negatives, double tau) {
  require_positive_tau(tau, "info_nce");
  require_rows(z_q, "info_nce");
  require_rows(negatives, "info_nce negatives");
  if (z_k.shape() != z_q.shape()) {
    throw DimensionError("info_nce: query " + shape_string(z_q.shape()) + " vs key " + shape_string(z_k.shape()));
  }
  if (negatives.dim(0) == 0) throw ContractError("info_nce: no negatives");
  if (negatives.dim(1) != z_q.dim(1)) {
    throw DimensionError("info_nce: query " + shape_string(z_q.shape()) + " vs negatives " +
                         shape_string(negatives.shape()));
  }
  const std::size_t batch = z_q.dim(0);
  const Tensor pos = reshape(sum_last(mul(z_q, z_k.detach())), {batch, 1});
  const Tensor neg = matmul(z_q, transpose(negatives.detach()));
  const std::array<Tensor, 2> parts{pos, neg};
  const Tensor log_probs = log_softmax(scale(concat(parts, 1), 1.0 / tau), 1);
  return scale(mean(narrow(log_probs, 1, 0, 1)), -1.0);
}

Tensor cluster_info_nce(const Tensor& z_q_star, const Tensor& z_k_star, const Tensor& cluster_negatives, double tau) {
  return info_nce(z_q_star, z_k_star, cluster_negatives, tau);
}

SimilarityDistribution similarity_distribution(const Tensor& z, const Tensor& anchor_embeddings,
                                               std::vector<std::vector<std::size_t>> anchors, double tau) {
  require_positive_tau(tau, "similarity_distribution");
  require_rows(z, "similarity_distribution");
  const std::size_t batch = z.dim(0), dim = z.dim(1);
  Tensor logits;
  if (anchor_embeddings.rank() == 2) {
    if (anchor_embeddings.dim(1) != dim || anchor_embeddings.dim(0) == 0) {
      throw DimensionError("similarity_distribution: z " + shape_string(z.shape()) + " vs anchors " +
                           shape_string(anchor_embeddings.shape()));
    }
    logits = matmul(z, transpose(anchor_embeddings));
  } else if (anchor_embeddings.rank() == 3) {
    if (anchor_embeddings.dim(0) != batch || anchor_embeddings.dim(2) != dim || anchor_embeddings.dim(1) == 0) {
      throw DimensionError("similarity_distribution: z " + shape_string(z.shape()) + " vs anchors " +
                           shape_string(anchor_embeddings.shape()));
    }
    const std::size_t k = anchor_embeddings.dim(1);
    logits = reshape(bmm(reshape(z, {batch, 1, dim}), permute(anchor_embeddings, {0, 2, 1})), {batch, k});
  } else {
    throw DimensionError("similarity_distribution: anchors must be [K, C] or [B, K, C], got " +
                         shape_string(anchor_embeddings.shape()));
  }
  if (anchors.size() != batch) throw ContractError("similarity_distribution: one anchor list per row required");
  for (const auto& a : anchors) {
    if (a.size() != logits.dim(1)) throw ContractError("similarity_distribution: anchor list length mismatch");
  }
  return {softmax(scale(logits, 1.0 / tau), 1), std::move(anchors), tau};
}

SimilarityDistribution similarity_distribution(const Tensor& z, const MemoryBank& bank,
                                               std::vector<std::vector<std::size_t>> anchors, double tau) {
  require_rows(z, "similarity_distribution");
  if (anchors.empty() || anchors.front().empty()) throw ContractError("similarity_distribution: empty anchor set");
  const std::size_t k = anchors.front().size();
  std::vector<std::size_t> flat;
  flat.reserve(anchors.size() * k);
  for (const auto& a : anchors) {
    if (a.size() != k) throw ContractError("similarity_distribution: ragged anchor lists");
    flat.insert(flat.end(), a.begin(), a.end());
  }
  Tensor gathered = reshape(bank.gather_keys(flat), {anchors.size(), k, bank.key_dim()});
  return similarity_distribution(z, gathered, std::move(anchors), tau);
}

Tensor kl_div_rows(const SimilarityDistribution& p, const SimilarityDistribution& q) {
  if (p.anchors != q.anchors) throw ContractError("kl_div: distributions are over different anchor sets");
  if (p.probs.shape() != q.probs.shape()) {
    throw DimensionError("kl_div: " + shape_string(p.probs.shape()) + " vs " + shape_string(q.probs.shape()));
  }
  require_rows(p.probs, "kl_div");
  const std::size_t rows = p.probs.dim(0), k = p.probs.dim(1);
  const auto pd = p.probs.data();
  std::vector<double> self_term(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      const double v = pd[r * k + i];
      self_term[r] += v * std::log(std::max(v, kLogFloor));
    }
  }
  const Tensor teacher = p.probs.detach();
  return sub(Tensor({rows}, std::move(self_term)), sum_last(mul(teacher, log(q.probs))));
}

Tensor kl_div(const SimilarityDistribution& p, const SimilarityDistribution& q) { return mean(kl_div_rows(p, q)); }

Tensor md_loss(const Tensor& teacher_key, const MemoryBank& teacher_bank, const Tensor& student_query,
               const MemoryBank& student_bank, std::size_t k, double tau_t, double tau_s, InvariantMonitor* monitor) {
  require_rows(teacher_key, "md_loss teacher");
  require_rows(student_query, "md_loss student");
  if (teacher_key.dim(0) != student_query.dim(0)) {
    throw DimensionError("md_loss: teacher " + shape_string(teacher_key.shape()) + " vs student " +
                         shape_string(student_query.shape()));
  }
  if (k == 0) throw ContractError("md_loss: K must be >= 1");
  require_synchronized(teacher_bank, student_bank);
  const Tensor teacher = teacher_key.detach();
  std::vector<std::vector<std::size_t>> anchors;
  anchors.reserve(teacher.dim(0));
  for (auto& top : teacher_bank.top_k_rows(teacher, k)) anchors.push_back(std::move(top.indices));
  const auto p = similarity_distribution(teacher, teacher_bank, anchors, tau_t);
  const auto q = similarity_distribution(student_query, student_bank, std::move(anchors), tau_s);
  Tensor rows = kl_div_rows(p, q);
  if (monitor) {
    monitor->check_distribution(p.probs);
    monitor->check_distribution(q.probs);
    monitor->check_kl(rows.data());
  }
  return mean(rows);
}

Tensor mutual_distillation(const DistillParty& a, const DistillParty& b, std::size_t k, const TemperatureSet& temps,
                           InvariantMonitor* monitor) {
  if (!a.bank || !b.bank) throw ContractError("mutual_distillation: missing bank");
  return add(md_loss(a.key, *a.bank, b.query, *b.bank, k, temps.teacher, temps.student, monitor),
             md_loss(b.key, *b.bank, a.query, *a.bank, k, temps.teacher, temps.student, monitor));
}

Tensor cmd_loss(std::span<const DistillParty> modalities, std::size_t k, const TemperatureSet& temps,
                InvariantMonitor* monitor) {
  const std::size_t n = modalities.size();
  if (n < 2) return Tensor::scalar(0.0);
  Tensor total = mutual_distillation(modalities[0], modalities[1], k, temps, monitor);
  if (n == 2) return total;
  for (std::size_t i = 1; i < n; ++i) {
    total = add(total, mutual_distillation(modalities[i], modalities[(i + 1) % n], k, temps, monitor));
  }
  return total;
}

Tensor imd_loss(const DistillParty& idb, const DistillParty& cdb, std::size_t k, const TemperatureSet& temps,
                InvariantMonitor* monitor) {
  return mutual_distillation(idb, cdb, k, temps, monitor);
}

TotalLoss total_loss(std::span<const IntraModalTerms> intra, const Tensor& cmd, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("total_loss: lambda must be >= 0");
  TotalLoss out;
  auto take = [&](const Tensor& t, const std::string& name, double weight) {
    if (!t.defined()) return;
    if (t.numel() != 1) throw DimensionError("total_loss: component " + name + " is not a scalar");
    const double v = t.item();
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "non-finite loss component " << name << " = " << v;
      throw NonFiniteError(name, msg.str());
    }
    out.components.push_back({name, v});
    const Tensor term = weight == 1.0 ? t : scale(t, weight);
    out.total = out.total.defined() ? add(out.total, term) : term;
  };
  for (const auto& terms : intra) {
    const std::string mod(modality_name(terms.modality));
    take(terms.scl, "scl/" + mod, 1.0);
    take(terms.scl_cluster, "scl_cluster/" + mod, 1.0);
    take(terms.imd, "imd/" + mod, 1.0);
  }
  take(cmd, "cmd", lambda);
  if (!out.total.defined()) throw ContractError("total_loss: no loss components");
  out.components.push_back({"total", out.total.item()});
  return out;
}

double positive_mining_loss(const Tensor& teacher_key, const MemoryBank& teacher_bank, const Tensor& student_query,
                            const MemoryBank& student_bank, double tau_s, std::size_t* mined_slot) {
  require_positive_tau(tau_s, "positive_mining_loss");
  require_synchronized(teacher_bank, student_bank);
  if (teacher_key.numel() != teacher_bank.key_dim() || student_query.numel() != student_bank.key_dim()) {
    throw DimensionError("positive_mining_loss: expects single-row embeddings");
  }
  const std::size_t n = teacher_bank.fill_count();
  if (n < 2) throw ContractError("positive_mining_loss: bank needs at least two entries");
  const auto top = teacher_bank.top_k(teacher_key.data(), 2);
  if (top.similarities[0] == top.similarities[1]) {
    throw ContractError("positive_mining_loss: tie between the teacher's two most similar slots");
  }
  const std::size_t u = top.indices[0];
  if (mined_slot) *mined_slot = u;

  std::vector<double> logits(n);
  const auto q = student_query.data();
  for (std::size_t s = 0; s < n; ++s) {
    const auto key = student_bank.key(s);
    double acc = 0.0;
    for (std::size_t c = 0; c < key.size(); ++c) acc += q[c] * key[c];
    logits[s] = acc / tau_s;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return -(logits[u] - mx - std::log(z));
}

PositiveMiningReport positive_mining_equivalence_check(const Tensor& teacher_key, const MemoryBank& teacher_bank,
                                                       const Tensor& student_query, const MemoryBank& student_bank,
                                                       double tau_s, std::vector<double> epsilons) {
  PositiveMiningReport report;
  report.closed_form = positive_mining_loss(teacher_key, teacher_bank, student_query, student_bank, tau_s,
                                            &report.mined_slot);
  const std::size_t n = teacher_bank.fill_count();
  const Tensor t = reshape(teacher_key.detach(), {1, teacher_bank.key_dim()});
  const Tensor s = reshape(student_query.detach(), {1, student_bank.key_dim()});
  report.epsilons = std::move(epsilons);
  for (double eps : report.epsilons) {
    const double v = md_loss(t, teacher_bank, s, student_bank, n, eps, tau_s).item();
    report.md_values.push_back(v);
    report.abs_diff.push_back(std::abs(v - report.closed_form));
  }
  report.monotone = true;
  for (std::size_t i = 1; i < report.abs_diff.size(); ++i) {
    if (!(report.abs_diff[i] <= report.abs_diff[i - 1])) report.monotone = false;
  }
  report.passed = report.monotone && !report.abs_diff.empty() && report.abs_diff.back() < kDegenerationTolerance;
  return report;
}

}  // namespace i2md
