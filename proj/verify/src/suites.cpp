#include "i2md/verify/suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "i2md/encoder.hpp"
#include "i2md/error.hpp"
#include "i2md/eval.hpp"
#include "i2md/grad_check.hpp"
#include "i2md/losses.hpp"
#include "i2md/memory_bank.hpp"
#include "i2md/ops.hpp"
#include "i2md/rng.hpp"
#include "i2md/verify/oracles.hpp"

namespace i2md::verify {
namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kLossTol = 1e-10;
constexpr double kOneHotTol = 1e-12;
// Minimum gap between the teacher's two best similarities in generated
// toy states; keeps the argmax well separated from its runner-up.
constexpr double kDegenerationMinGap = 0.02;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng() % (hi - lo + 1)); }

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor(shape, std::move(v));
}

Tensor away_from_zero(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, 0.1, 1.0) * (rng() % 2 ? 1.0 : -1.0);
  return Tensor(shape, std::move(v));
}

Vec unit_vec(std::size_t c, Rng& rng) {
  Vec v(c);
  double n = 0.0;
  for (auto& x : v) {
    x = normal(rng, 0.0, 1.0);
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

Tensor to_tensor(const Rows& rows) {
  std::vector<double> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return Tensor({rows.size(), rows.empty() ? 0 : rows.front().size()}, std::move(data));
}

Rows to_rows(const Tensor& t) {
  Rows out(t.dim(0));
  const std::size_t c = t.dim(1);
  for (std::size_t r = 0; r < out.size(); ++r) out[r].assign(t.data().begin() + static_cast<std::ptrdiff_t>(r * c),
                                                             t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  return out;
}

Rows unit_rows(std::size_t n, std::size_t c, Rng& rng) {
  Rows out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(unit_vec(c, rng));
  return out;
}

std::vector<std::uint64_t> iota_tags(std::size_t n, std::uint64_t start = 0) {
  std::vector<std::uint64_t> t(n);
  std::iota(t.begin(), t.end(), start);
  return t;
}

std::shared_ptr<MemoryBank> bank_from(const Rows& keys, std::size_t value_dim = 0, Rng* rng = nullptr) {
  auto bank = std::make_shared<MemoryBank>(keys.size(), keys.front().size(), value_dim);
  const auto tags = iota_tags(keys.size());
  if (value_dim > 0) {
    const Tensor values = random_tensor({keys.size(), value_dim}, *rng);
    bank->enqueue(to_tensor(keys), &values, tags);
  } else {
    bank->enqueue(to_tensor(keys), nullptr, tags);
  }
  return bank;
}

Rows bank_rows(const MemoryBank& bank) {
  Rows out;
  for (std::size_t s = 0; s < bank.fill_count(); ++s) out.emplace_back(bank.key(s).begin(), bank.key(s).end());
  return out;
}

struct GradCase {
  ScalarFunction f;
  std::vector<Tensor> inputs;
};

using Op = std::function<Tensor(const std::vector<Tensor>&)>;

// Contracts a tensor-valued op against a fixed random weight so every output
// element contributes to the checked gradient.
GradCase weighted(std::vector<Tensor> inputs, Op op, Rng& rng) {
  const Tensor probe = op(inputs);
  const Tensor w = random_tensor(probe.shape(), rng);
  return {[op, w](const std::vector<Tensor>& in) { return sum(mul(op(in), w)); }, std::move(inputs)};
}

using CaseFactory = std::function<GradCase(Rng&)>;

std::vector<std::pair<std::string, CaseFactory>> gradient_cases() {
  std::vector<std::pair<std::string, CaseFactory>> cases;
  auto add = [&](const std::string& name, CaseFactory f) { cases.emplace_back(name, std::move(f)); };
  const TemperatureSet temps;

  add("op/matmul", [](Rng& rng) {
    const auto m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
    return weighted({random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                    [](const auto& in) { return matmul(in[0], in[1]); }, rng);
  });
  add("op/bmm", [](Rng& rng) {
    const auto b = pick(rng, 1, 3), m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
    return weighted({random_tensor({b, m, k}, rng), random_tensor({b, k, n}, rng)},
                    [](const auto& in) { return bmm(in[0], in[1]); }, rng);
  });
  add("op/add", [](Rng& rng) {
    const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
    return weighted({random_tensor(s, rng), random_tensor(s, rng)}, [](const auto& in) { return i2md::add(in[0], in[1]); }, rng);
  });
  add("op/sub", [](Rng& rng) {
    const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
    return weighted({random_tensor(s, rng), random_tensor(s, rng)}, [](const auto& in) { return sub(in[0], in[1]); }, rng);
  });
  add("op/mul", [](Rng& rng) {
    const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
    return weighted({random_tensor(s, rng), random_tensor(s, rng)}, [](const auto& in) { return mul(in[0], in[1]); }, rng);
  });
  add("op/scale", [](Rng& rng) {
    const double f = uniform(rng, -3.0, 3.0);
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [f](const auto& in) { return scale(in[0], f); },
                    rng);
  });
  add("op/add_scalar", [](Rng& rng) {
    const double v = uniform(rng, -3.0, 3.0);
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)},
                    [v](const auto& in) { return add_scalar(in[0], v); }, rng);
  });
  add("op/add_row_bias", [](Rng& rng) {
    const auto r = pick(rng, 1, 4), c = pick(rng, 1, 4);
    return weighted({random_tensor({r, c}, rng), random_tensor({c}, rng)},
                    [](const auto& in) { return add_row_bias(in[0], in[1]); }, rng);
  });
  add("op/exp", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [](const auto& in) { return i2md::exp(in[0]); },
                    rng);
  });
  add("op/log", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng, 0.5, 2.0)},
                    [](const auto& in) { return i2md::log(in[0]); }, rng);
  });
  add("op/relu", [](Rng& rng) {
    return weighted({away_from_zero({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [](const auto& in) { return relu(in[0]); },
                    rng);
  });
  add("op/sum", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [](const auto& in) { return sum(in[0]); }, rng);
  });
  add("op/mean", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [](const auto& in) { return mean(in[0]); }, rng);
  });
  add("op/sum_last", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)}, rng)},
                    [](const auto& in) { return sum_last(in[0]); }, rng);
  });
  add("op/transpose", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}, [](const auto& in) { return transpose(in[0]); },
                    rng);
  });
  add("op/permute", [](Rng& rng) {
    std::vector<std::size_t> order{0, 1, 2};
    std::shuffle(order.begin(), order.end(), rng);
    return weighted({random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, rng)},
                    [order](const auto& in) { return permute(in[0], order); }, rng);
  });
  add("op/reshape", [](Rng& rng) {
    const auto a = pick(rng, 1, 4), b = pick(rng, 1, 4);
    return weighted({random_tensor({a, b}, rng)}, [a, b](const auto& in) { return reshape(in[0], {b, a}); }, rng);
  });
  add("op/concat", [](Rng& rng) {
    const std::size_t axis = rng() % 2;
    Shape s1{pick(rng, 1, 3), pick(rng, 1, 3)}, s2 = s1;
    s2[axis] = pick(rng, 1, 3);
    return weighted({random_tensor(s1, rng), random_tensor(s2, rng)},
                    [axis](const auto& in) {
                      const std::vector<Tensor> parts{in[0], in[1]};
                      return concat(parts, axis);
                    },
                    rng);
  });
  add("op/narrow", [](Rng& rng) {
    const std::size_t axis = rng() % 2;
    Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
    const std::size_t len = pick(rng, 1, s[axis] - 1);
    const std::size_t start = pick(rng, 0, s[axis] - len);
    return weighted({random_tensor(s, rng)}, [=](const auto& in) { return narrow(in[0], axis, start, len); }, rng);
  });
  add("op/gather", [](Rng& rng) {
    const auto rows = pick(rng, 2, 5);
    std::vector<std::size_t> idx(pick(rng, 1, 6));
    for (auto& i : idx) i = pick(rng, 0, rows - 1);
    return weighted({random_tensor({rows, pick(rng, 1, 4)}, rng)}, [idx](const auto& in) { return gather(in[0], idx); }, rng);
  });
  add("op/softmax", [](Rng& rng) {
    const std::size_t axis = rng() % 3;
    return weighted({random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 8)}, rng, -2.0, 2.0)},
                    [axis](const auto& in) { return softmax(in[0], axis); }, rng);
  });
  add("op/log_softmax", [](Rng& rng) {
    const std::size_t axis = rng() % 3;
    return weighted({random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 8)}, rng, -2.0, 2.0)},
                    [axis](const auto& in) { return log_softmax(in[0], axis); }, rng);
  });
  add("op/l2_normalize", [](Rng& rng) {
    return weighted({random_tensor({pick(rng, 1, 3), pick(rng, 2, 16)}, rng)},
                    [](const auto& in) { return l2_normalize(in[0]); }, rng);
  });
  add("op/layer_norm", [](Rng& rng) {
    const auto r = pick(rng, 1, 4), c = pick(rng, 2, 6);
    return weighted({random_tensor({r, c}, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)},
                    [](const auto& in) { return layer_norm(in[0], in[1], in[2]); }, rng);
  });
  add("op/group_mean", [](Rng& rng) {
    const auto g = pick(rng, 1, 3), n = pick(rng, 1, 4);
    return weighted({random_tensor({g * n, pick(rng, 1, 4)}, rng)}, [n](const auto& in) { return group_mean(in[0], n); },
                    rng);
  });
  add("op/graph_mix", [](Rng& rng) {
    const Tensor adj = Topology::humanoid9().normalized_adjacency();
    return weighted({random_tensor({9 * pick(rng, 1, 3), pick(rng, 1, 4)}, rng)},
                    [adj](const auto& in) { return graph_mix(in[0], adj); }, rng);
  });

  add("loss/info_nce", [temps](Rng& rng) {
    const std::size_t b = 4, c = 8, n = 16;
    const Tensor k = to_tensor(unit_rows(b, c, rng));
    const Tensor negs = to_tensor(unit_rows(n, c, rng));
    const double tau = temps.contrastive;
    return GradCase{[=](const auto& in) { return info_nce(l2_normalize(in[0]), k, negs, tau); },
                    {random_tensor({b, c}, rng)}};
  });
  add("loss/similarity_distribution", [temps](Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 8), c = 8;
    const Tensor anchors = reshape(to_tensor(unit_rows(b * k, c, rng)), {b, k, c});
    std::vector<std::vector<std::size_t>> idx(b, std::vector<std::size_t>(k));
    for (auto& row : idx) std::iota(row.begin(), row.end(), std::size_t{0});
    const double tau = temps.student;
    return weighted({random_tensor({b, c}, rng)},
                    [=](const auto& in) { return similarity_distribution(l2_normalize(in[0]), anchors, idx, tau).probs; },
                    rng);
  });
  add("loss/kl_div", [temps](Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 8), c = 8;
    const Tensor anchors = reshape(to_tensor(unit_rows(b * k, c, rng)), {b, k, c});
    std::vector<std::vector<std::size_t>> idx(b, std::vector<std::size_t>(k));
    for (auto& row : idx) std::iota(row.begin(), row.end(), std::size_t{0});
    const auto p = similarity_distribution(to_tensor(unit_rows(b, c, rng)), anchors, idx, temps.teacher);
    return GradCase{[=](const auto& in) {
                      return kl_div(p, similarity_distribution(l2_normalize(in[0]), anchors, idx, temps.student));
                    },
                    {random_tensor({b, c}, rng)}};
  });
  add("loss/mutual_distillation", [temps](Rng& rng) {
    const std::size_t b = 2, c = 8, n = 16, k = 8;
    auto bank_a = bank_from(unit_rows(n, c, rng));
    auto bank_b = bank_from(unit_rows(n, c, rng));
    const Tensor ka = to_tensor(unit_rows(b, c, rng)), kb = to_tensor(unit_rows(b, c, rng));
    return GradCase{[=](const auto& in) {
                      return mutual_distillation({l2_normalize(in[0]), ka, bank_a.get()},
                                                 {l2_normalize(in[1]), kb, bank_b.get()}, k, temps);
                    },
                    {random_tensor({b, c}, rng), random_tensor({b, c}, rng)}};
  });
  add("loss/cmd", [temps](Rng& rng) {
    const std::size_t b = 2, c = 8, n = 16, k = 8;
    std::vector<std::shared_ptr<MemoryBank>> banks;
    std::vector<Tensor> keys, inputs;
    for (int m = 0; m < 3; ++m) {
      banks.push_back(bank_from(unit_rows(n, c, rng)));
      keys.push_back(to_tensor(unit_rows(b, c, rng)));
      inputs.push_back(random_tensor({b, c}, rng));
    }
    return GradCase{[=](const auto& in) {
                      std::vector<DistillParty> parties;
                      for (int m = 0; m < 3; ++m) parties.push_back({l2_normalize(in[m]), keys[m], banks[m].get()});
                      return cmd_loss(parties, k, temps);
                    },
                    inputs};
  });
  add("loss/imd", [temps](Rng& rng) {
    const std::size_t b = 2, c = 8, n = 16, k = 8;
    auto idb = bank_from(unit_rows(n, c, rng));
    auto cdb = bank_from(unit_rows(n, c, rng));
    const Tensor zk = to_tensor(unit_rows(b, c, rng)), zk_star = to_tensor(unit_rows(b, c, rng));
    return GradCase{[=](const auto& in) {
                      return imd_loss({l2_normalize(in[0]), zk, idb.get()}, {l2_normalize(in[1]), zk_star, cdb.get()}, k,
                                      temps);
                    },
                    {random_tensor({b, c}, rng), random_tensor({b, c}, rng)}};
  });
  add("loss/total", [temps](Rng& rng) {
    // Two-sample batch, three modalities, both branches.
    const std::size_t b = 2, c = 8, n = 16, k = 8;
    std::vector<std::shared_ptr<MemoryBank>> idb, cdb;
    std::vector<Tensor> zk, zk_star, inputs;
    for (int m = 0; m < 3; ++m) {
      idb.push_back(bank_from(unit_rows(n, c, rng)));
      cdb.push_back(bank_from(unit_rows(n, c, rng)));
      zk.push_back(to_tensor(unit_rows(b, c, rng)));
      zk_star.push_back(to_tensor(unit_rows(b, c, rng)));
      inputs.push_back(random_tensor({b, c}, rng));
      inputs.push_back(random_tensor({b, c}, rng));
    }
    return GradCase{[=](const auto& in) {
                      std::vector<IntraModalTerms> intra;
                      std::vector<DistillParty> parties;
                      for (std::size_t m = 0; m < 3; ++m) {
                        const Tensor zq = l2_normalize(in[2 * m]), zq_star = l2_normalize(in[2 * m + 1]);
                        IntraModalTerms t;
                        t.modality = kAllModalities[m];
                        t.scl = info_nce(zq, zk[m], idb[m]->keys_tensor(), temps.contrastive);
                        t.scl_cluster = cluster_info_nce(zq_star, zk_star[m], cdb[m]->keys_tensor(), temps.contrastive);
                        t.imd = imd_loss({zq, zk[m], idb[m].get()}, {zq_star, zk_star[m], cdb[m].get()}, k, temps);
                        intra.push_back(t);
                        parties.push_back({zq, zk[m], idb[m].get()});
                      }
                      return total_loss(intra, cmd_loss(parties, k, temps), 0.5).total;
                    },
                    inputs};
  });
  add("encoder/pipeline", [temps](Rng& rng) {
    EncoderConfig cfg;
    cfg.gcn_channels = {4, 4};
    cfg.frames = 4;
    cfg.layers = 1;
    cfg.model_dim = 4;
    cfg.heads = 2;
    cfg.ffn_dim = 8;
    cfg.projection_dim = 4;
    cfg.has_cross_attention = true;
    const Topology topo({-1, 0, 1});
    const std::size_t b = 2, kd = 3;
    EncoderParams params = EncoderParams::init(cfg, rng);
    // Non-zero biases so their gradients are exercised away from init.
    for (auto& [name, t] : params.named()) {
      if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos) {
        Tensor h = t;
        for (auto& v : h.mutable_data()) v = uniform(rng, -0.2, 0.2);
      }
    }
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : params.named()) inputs.push_back(t.detach());
    const Tensor x = random_tensor({b * cfg.frames * topo.joint_count(), 3}, rng);
    const Tensor neighbors = random_tensor({b * kd, cfg.model_dim}, rng);
    const Tensor zk = to_tensor(unit_rows(b, cfg.projection_dim, rng));
    const Tensor negs = to_tensor(unit_rows(8, cfg.projection_dim, rng));
    const EncoderParams templ = params.clone(false);
    return GradCase{[=](const auto& in) {
                      const EncoderParams p = templ.with_tensors(in);
                      const Tensor tokens = gcn_forward(p, x, topo);
                      const Tensor z = project(p, transformer_forward(p, tokens, b));
                      const Tensor z_star = project(p, transformer_forward(p, tokens, b, &neighbors));
                      return i2md::add(info_nce(z, zk, negs, temps.contrastive),
                                       info_nce(z_star, zk, negs, temps.contrastive));
                    },
                    inputs};
  });
  return cases;
}

std::string fmt_error(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

bool SuiteReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

SuiteReport run_gradient_suite(std::size_t seeds, std::uint64_t base_seed) {
  SuiteReport report{"gradients", {}};
  const auto cases = gradient_cases();
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& [name, factory] = cases[ci];
    CheckResult check{name, true, 0.0, ""};
    std::size_t failures = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(derive_seed(base_seed, 0x3000 + ci, s));
      GradCase gc = factory(rng);
      const auto r = grad_check(gc.f, gc.inputs, kGradEps, kGradTol);
      check.max_error = std::max(check.max_error, r.max_error);
      if (!r.passed) ++failures;
    }
    check.passed = failures == 0 && seeds > 0;
    check.detail = std::to_string(seeds) + " seeds, " + std::to_string(failures) + " failed, tol " + fmt_error(kGradTol);
    report.checks.push_back(std::move(check));
  }
  return report;
}

SuiteReport run_degeneration_suite(std::size_t states, std::uint64_t base_seed) {
  SuiteReport report{"degeneration", {}};
  const double tau_s = TemperatureSet{}.student;
  for (std::size_t i = 0; i < states; ++i) {
    Rng rng(derive_seed(base_seed, 0x3100, i));
    const std::size_t n = pick(rng, 8, 64), c = 8;
    Rows teacher_bank;
    Vec teacher_key;
    for (;;) {
      teacher_bank = unit_rows(n, c, rng);
      teacher_key = unit_vec(c, rng);
      std::vector<double> sims;
      for (const auto& r : teacher_bank) sims.push_back(dot(teacher_key, r));
      std::sort(sims.rbegin(), sims.rend());
      if (sims[0] - sims[1] >= kDegenerationMinGap) break;
    }
    const auto tb = bank_from(teacher_bank);
    const auto sb = bank_from(unit_rows(n, c, rng));
    const Tensor tk({1, c}, teacher_key);
    const Tensor sq({1, c}, unit_vec(c, rng));
    const auto r = positive_mining_equivalence_check(tk, *tb, sq, *sb, tau_s);
    std::ostringstream detail;
    detail << "N=" << n << " |a-b|:";
    for (std::size_t e = 0; e < r.epsilons.size(); ++e) detail << " eps=" << r.epsilons[e] << "->" << fmt_error(r.abs_diff[e]);
    detail << (r.monotone ? " monotone" : " NOT monotone");
    report.checks.push_back({"state " + std::to_string(i), r.passed, r.abs_diff.back(), detail.str()});
  }

  {
    // Injected one-hot teacher: the KL collapses to the closed form exactly.
    Rng rng(derive_seed(base_seed, 0x3101));
    const std::size_t n = 32, c = 8;
    const auto tb = bank_from(unit_rows(n, c, rng));
    const auto sb = bank_from(unit_rows(n, c, rng));
    const Tensor tk({1, c}, unit_vec(c, rng));
    const Tensor sq({1, c}, unit_vec(c, rng));
    std::size_t u = 0;
    const double closed = positive_mining_loss(tk, *tb, sq, *sb, tau_s, &u);
    std::vector<std::vector<std::size_t>> anchors{tb->top_k(tk.data(), n).indices};
    std::vector<double> onehot(n, 0.0);
    onehot[static_cast<std::size_t>(std::find(anchors[0].begin(), anchors[0].end(), u) - anchors[0].begin())] = 1.0;
    const SimilarityDistribution p{Tensor({1, n}, onehot), anchors, 0.0};
    const double kl = kl_div(p, similarity_distribution(sq, *sb, anchors, tau_s)).item();
    const double diff = std::abs(kl - closed);
    report.checks.push_back({"one-hot teacher", diff < kOneHotTol, diff, "tol " + fmt_error(kOneHotTol)});
  }

  {
    // Agreeing modalities with a planted positive: the mined slot is the plant.
    Rng rng(derive_seed(base_seed, 0x3102));
    const std::size_t n = 32, c = 16, planted = pick(rng, 0, n - 1);
    Rows keys = unit_rows(n, c, rng);
    Vec anchor = keys[planted];
    for (auto& v : anchor) v += 0.02 * normal(rng, 0.0, 1.0);
    const double norm = std::sqrt(dot(anchor, anchor));
    for (auto& v : anchor) v /= norm;
    const auto bank = bank_from(keys);
    std::size_t u = 0;
    positive_mining_loss(Tensor({1, c}, anchor), *bank, Tensor({1, c}, anchor), *bank, tau_s, &u);
    report.checks.push_back({"planted positive mined", u == planted, u == planted ? 0.0 : 1.0,
                             "planted slot " + std::to_string(planted) + ", mined " + std::to_string(u)});
  }
  return report;
}

SuiteReport run_oracle_suite(std::uint64_t base_seed) {
  SuiteReport report{"oracles", {}};
  Rng rng(derive_seed(base_seed, 0x3200));
  const TemperatureSet temps;

  {
    std::size_t mismatches = 0, trials = 0;
    for (std::size_t n : {16, 256, 1024}) {
      const std::size_t c = 16;
      // Overfill so the ring has wrapped.
      MemoryBank bank(n, c);
      for (std::size_t filled = 0; filled < n + n / 2;) {
        const std::size_t batch = std::min<std::size_t>(pick(rng, 1, 64), n);
        bank.enqueue(to_tensor(unit_rows(batch, c, rng)), nullptr, iota_tags(batch, filled));
        filled += batch;
      }
      const Rows keys = bank_rows(bank);
      for (std::size_t k : {std::size_t{1}, n / 8, n}) {
        for (int q = 0; q < 5; ++q) {
          const Vec query = unit_vec(c, rng);
          const auto got = bank.top_k(query, k);
          const auto want = brute_force_top_k(keys, query, k);
          ++trials;
          bool same = got.indices == want;
          for (std::size_t i = 0; same && i < k; ++i) same = got.similarities[i] == dot(query, keys[want[i]]);
          mismatches += !same;
        }
      }
    }
    MemoryBank ties(8, 4);
    Rows same_key(8, Vec{0.5, 0.5, 0.5, 0.5});
    ties.enqueue(to_tensor(same_key), nullptr, iota_tags(8));
    ++trials;
    mismatches += ties.top_k(Vec{1, 0, 0, 0}, 3).indices != brute_force_top_k(same_key, Vec{1, 0, 0, 0}, 3);
    report.checks.push_back({"top_k vs full sort", mismatches == 0, static_cast<double>(mismatches),
                             std::to_string(trials) + " queries, N up to 1024"});
  }

  {
    std::size_t mismatches = 0;
    const std::size_t cap = 16, c = 4;
    MemoryBank bank(cap, c);
    FifoOracle oracle(cap);
    std::uint64_t next = 0;
    for (int step = 0; step < 10; ++step) {
      const std::size_t batch = pick(rng, 1, cap);
      const Rows rows = unit_rows(batch, c, rng);
      const auto tags = iota_tags(batch, next);
      next += batch;
      bank.enqueue(to_tensor(rows), nullptr, tags);
      for (std::size_t i = 0; i < batch; ++i) oracle.push(tags[i], rows[i]);
      const auto slots = bank.slots_oldest_first();
      if (slots.size() != oracle.entries().size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto key = bank.key(slots[i]);
        mismatches += bank.tag(slots[i]) != oracle.entries()[i].first ||
                      !std::equal(key.begin(), key.end(), oracle.entries()[i].second.begin());
      }
    }
    BankGroup group({Modality::Joint, Modality::Motion, Modality::Bone}, cap, c, 3);
    for (int step = 0; step < 10; ++step) {
      const std::size_t batch = pick(rng, 1, cap);
      const auto tags = iota_tags(batch, next);
      next += batch;
      std::vector<BankWrite> writes;
      for (auto m : group.modalities()) {
        writes.push_back({m, Branch::Instance, to_tensor(unit_rows(batch, c, rng)), random_tensor({batch, 3}, rng)});
        writes.push_back({m, Branch::Cluster, to_tensor(unit_rows(batch, c, rng)), {}});
      }
      group.enqueue_batch(writes, tags);
      const auto& ref = group.bank(Modality::Joint, Branch::Instance);
      for (auto m : group.modalities()) {
        for (auto b : {Branch::Instance, Branch::Cluster}) {
          for (std::size_t s = 0; s < ref.fill_count(); ++s) mismatches += group.bank(m, b).tag(s) != ref.tag(s);
        }
      }
    }
    report.checks.push_back({"FIFO contents and slot sync", mismatches == 0, static_cast<double>(mismatches),
                             "10 random batches, capacity 16"});
  }

  {
    const std::size_t dim = 16;
    FeatureSet train, test;
    train.dim = test.dim = dim;
    Rows train_rows, test_rows;
    for (int i = 0; i < 200; ++i) {
      train_rows.push_back(to_rows(random_tensor({1, dim}, rng))[0]);
      train.labels.push_back(static_cast<int>(rng() % 5));
    }
    for (int i = 0; i < 100; ++i) {
      test_rows.push_back(to_rows(random_tensor({1, dim}, rng))[0]);
      test.labels.push_back(static_cast<int>(rng() % 5));
    }
    for (const auto& r : train_rows) train.features.insert(train.features.end(), r.begin(), r.end());
    for (const auto& r : test_rows) test.features.insert(test.features.end(), r.begin(), r.end());
    const auto got = knn_predict(train, test);
    const auto want = brute_force_knn(train_rows, train.labels, test_rows);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != want[i];
    report.checks.push_back({"1-NN vs double loop", mismatches == 0, static_cast<double>(mismatches), "200 train, 100 test"});
  }

  auto loss_check = [&](const std::string& name, double got, double want) {
    const double err = std::abs(got - want);
    report.checks.push_back({name, err <= kLossTol, err, "tol " + fmt_error(kLossTol)});
  };
  {
    const std::size_t b = 8, c = 16;
    for (std::size_t n : {16, 1024}) {
      const Rows q = unit_rows(b, c, rng), k = unit_rows(b, c, rng), negs = unit_rows(n, c, rng);
      loss_check("info_nce N=" + std::to_string(n),
                 info_nce(to_tensor(q), to_tensor(k), to_tensor(negs), temps.contrastive).item(),
                 reference_info_nce(q, k, negs, temps.contrastive));
      loss_check("cluster_info_nce N=" + std::to_string(n),
                 cluster_info_nce(to_tensor(k), to_tensor(q), to_tensor(negs), temps.contrastive).item(),
                 reference_info_nce(k, q, negs, temps.contrastive));
    }
  }
  {
    const std::size_t k = 12, c = 16;
    const Rows anchors = unit_rows(k, c, rng);
    const Vec z = unit_vec(c, rng), t = unit_vec(c, rng);
    std::vector<std::vector<std::size_t>> idx{std::vector<std::size_t>(k)};
    std::iota(idx[0].begin(), idx[0].end(), std::size_t{0});
    const auto q = similarity_distribution(Tensor({1, c}, z), to_tensor(anchors), idx, temps.student);
    const auto p = similarity_distribution(Tensor({1, c}, t), to_tensor(anchors), idx, temps.teacher);
    const Vec ref_q = reference_distribution(z, anchors, temps.student);
    double err = 0.0;
    for (std::size_t i = 0; i < k; ++i) err = std::max(err, std::abs(q.probs[i] - ref_q[i]));
    report.checks.push_back({"similarity_distribution", err <= kLossTol, err, "tol " + fmt_error(kLossTol)});
    loss_check("kl_div", kl_div(p, q).item(), reference_kl(reference_distribution(t, anchors, temps.teacher), ref_q));
  }
  {
    const std::size_t b = 4, c = 16, n = 1024, k = 128;
    Rows banks[3], queries[3], keys[3];
    std::shared_ptr<MemoryBank> mb[3];
    for (int m = 0; m < 3; ++m) {
      banks[m] = unit_rows(n, c, rng);
      queries[m] = unit_rows(b, c, rng);
      keys[m] = unit_rows(b, c, rng);
      mb[m] = bank_from(banks[m]);
    }
    loss_check("md_loss N=1024 K=128",
               md_loss(to_tensor(keys[0]), *mb[0], to_tensor(queries[1]), *mb[1], k, temps.teacher, temps.student).item(),
               reference_md_loss(keys[0], banks[0], queries[1], banks[1], k, temps.teacher, temps.student));
    std::vector<DistillParty> parties;
    for (int m = 0; m < 3; ++m) parties.push_back({to_tensor(queries[m]), to_tensor(keys[m]), mb[m].get()});
    double ref_cmd = 0.0;
    for (int m = 0; m < 3; ++m) {
      const int o = (m + 1) % 3;
      ref_cmd += reference_md_loss(keys[m], banks[m], queries[o], banks[o], k, temps.teacher, temps.student) +
                 reference_md_loss(keys[o], banks[o], queries[m], banks[m], k, temps.teacher, temps.student);
    }
    loss_check("cmd_loss", cmd_loss(parties, k, temps).item(), ref_cmd);
    const double ref_imd = reference_md_loss(keys[0], banks[0], queries[2], banks[2], k, temps.teacher, temps.student) +
                           reference_md_loss(keys[2], banks[2], queries[0], banks[0], k, temps.teacher, temps.student);
    loss_check("imd_loss", imd_loss(parties[0], parties[2], k, temps).item(), ref_imd);

    IntraModalTerms t;
    t.scl = Tensor::scalar(0.25);
    t.scl_cluster = Tensor::scalar(0.5);
    t.imd = Tensor::scalar(1.5);
    const IntraModalTerms intra[1] = {t};
    loss_check("total_loss", total_loss(intra, Tensor::scalar(ref_cmd), 0.5).total.item(), 0.25 + 0.5 + 1.5 + 0.5 * ref_cmd);
  }
  return report;
}

SuiteReport run_suite(const std::string& name) {
  if (name == "gradients") return run_gradient_suite();
  if (name == "eq6" || name == "degeneration") return run_degeneration_suite();
  if (name == "oracles") return run_oracle_suite();
  throw std::invalid_argument("unknown suite '" + name + "' (expected gradients, eq6 or oracles)");
}

void print_report(std::ostream& os, const SuiteReport& report) {
  for (const auto& c : report.checks) {
    os << (c.passed ? "PASS" : "FAIL") << "  " << report.suite << ": " << c.name << "  max_error=" << fmt_error(c.max_error)
       << "  " << c.detail << '\n';
  }
  os << (report.passed() ? "PASS" : "FAIL") << "  suite " << report.suite << " (" << report.checks.size() << " checks)\n";
}

}  // namespace i2md::verify
