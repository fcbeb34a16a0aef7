#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "helpers.hpp"
#include "i2md/error.hpp"
#include "i2md/grad_check.hpp"
#include "i2md/losses.hpp"
#include "i2md/ops.hpp"
#include "i2md/verify/oracles.hpp"

namespace i2md {
namespace {

using testing::random_tensor;
using testing::unit_rows;

verify::Rows to_rows(const Tensor& t) {
  verify::Rows rows(t.dim(0), verify::Vec(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < t.dim(1); ++c) rows[r][c] = t[r * t.dim(1) + c];
  }
  return rows;
}

MemoryBank bank_from(const Tensor& keys, const std::vector<std::size_t>* order = nullptr) {
  const std::size_t n = keys.dim(0), d = keys.dim(1);
  MemoryBank bank(n, d);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order) idx = *order;
  std::vector<std::uint64_t> tags(idx.begin(), idx.end());
  bank.enqueue(gather(keys, idx), nullptr, tags);
  return bank;
}

TEST(InfoNce, EqualSimilarityNegativeGivesLn2) {
  const Tensor q({1, 2}, {1.0, 0.0}), k({1, 2}, {0.6, 0.8}), m({1, 2}, {0.6, -0.8});
  EXPECT_NEAR(info_nce(q, k, m, 0.07).item(), std::log(2.0), 1e-14);
  EXPECT_NEAR(cluster_info_nce(q, k, m, 0.5).item(), std::log(2.0), 1e-14);
}

TEST(InfoNce, OpposedNegativesNearZero) {
  const double tau = 0.07;
  const Tensor q({1, 2}, {1.0, 0.0});
  std::vector<double> neg;
  for (int i = 0; i < 16; ++i) neg.insert(neg.end(), {-1.0, 0.0});
  const double expected = std::log1p(16.0 * std::exp(-2.0 / tau));
  const double got = info_nce(q, q, Tensor({16, 2}, neg), tau).item();
  EXPECT_NEAR(got, expected, 1e-14);
  EXPECT_LT(got, 1e-10);
}

TEST(InfoNce, DefaultTemperatures) {
  const TemperatureSet t;
  EXPECT_EQ(t.contrastive, 0.07);
  EXPECT_EQ(t.teacher, 0.05);
  EXPECT_EQ(t.student, 0.1);
  EXPECT_EQ(LossWeights{}.lambda_cmd, 0.5);
}

TEST(InfoNce, EmptyBankIsContractError) {
  const Tensor q({1, 2}, {1.0, 0.0});
  EXPECT_THROW(info_nce(q, q, Tensor::zeros({0, 2}), 0.07), ContractError);
  EXPECT_THROW(info_nce(q, q, q, 0.0), ContractError);
}

TEST(InfoNce, MatchesOracleAndOnlyQueryGetsGradient) {
  Rng rng(1);
  Tensor q = unit_rows(4, 6, rng, true);
  Tensor k = unit_rows(4, 6, rng, true);
  Tensor neg = unit_rows(20, 6, rng, true);
  const Tensor loss = info_nce(q, k, neg, 0.07);
  EXPECT_NEAR(loss.item(), verify::reference_info_nce(to_rows(q), to_rows(k), to_rows(neg), 0.07), 1e-10);
  loss.backward();
  EXPECT_TRUE(q.has_grad());
  EXPECT_FALSE(k.has_grad());
  EXPECT_FALSE(neg.has_grad());
  auto r = grad_check([&](const std::vector<Tensor>& x) { return info_nce(l2_normalize(x[0]), k, neg, 0.07); },
                      {random_tensor({4, 6}, rng)});
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(ClusterInfoNce, EqualsInstanceFormOnSameInputs) {
  Rng rng(2);
  const Tensor q = unit_rows(5, 4, rng), k = unit_rows(5, 4, rng), neg = unit_rows(9, 4, rng);
  EXPECT_EQ(cluster_info_nce(q, k, neg, 0.07).item(), info_nce(q, k, neg, 0.07).item());
  EXPECT_NEAR(cluster_info_nce(q, k, neg, 0.07).item(),
              verify::reference_info_nce(to_rows(q), to_rows(k), to_rows(neg), 0.07), 1e-10);
}

SimilarityDistribution dist(const Tensor& z, const Tensor& anchors, double tau) {
  std::vector<std::size_t> ids(anchors.dim(0));
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return similarity_distribution(z, anchors, std::vector<std::vector<std::size_t>>(z.dim(0), ids), tau);
}

TEST(SimilarityDistribution, EqualSimilaritiesAreUniform) {
  const Tensor z({1, 2}, {1.0, 0.0});
  const Tensor anchors({4, 2}, {0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0});
  const auto p = dist(z, anchors, 0.1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.probs[i], 0.25, 1e-15);
}

TEST(SimilarityDistribution, TwoBasisAnchors) {
  const auto p = dist(Tensor({1, 2}, {1.0, 0.0}), Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p.probs[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p.probs[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(p.probs[0], 0.7311, 1e-4);
}

TEST(SimilarityDistribution, LowTemperatureIsNearlyOneHot) {
  Rng rng(3);
  Tensor z, anchors;
  for (;;) {
    z = unit_rows(1, 8, rng);
    anchors = unit_rows(10, 8, rng);
    const Tensor s = matmul(z, transpose(anchors));
    std::vector<double> sims(s.data().begin(), s.data().end());
    std::sort(sims.rbegin(), sims.rend());
    if (sims[0] - sims[1] > 0.2) break;
  }
  const auto p = dist(z, anchors, 0.01);
  double best = 0.0;
  for (double v : p.probs.data()) best = std::max(best, v);
  EXPECT_GT(best, 1.0 - 1e-6);
}

TEST(SimilarityDistribution, NonPositiveTemperatureIsContractError) {
  const Tensor z({1, 2}, {1.0, 0.0});
  EXPECT_THROW(dist(z, z, 0.0), ContractError);
  EXPECT_THROW(dist(z, z, -1.0), ContractError);
}

TEST(SimilarityDistribution, MatchesOracleRowByRow) {
  Rng rng(4);
  const Tensor z = unit_rows(3, 5, rng), a = unit_rows(7, 5, rng);
  const auto p = dist(z, a, 0.1);
  const auto rows = to_rows(z), anchors = to_rows(a);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto ref = verify::reference_distribution(rows[r], anchors, 0.1);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p.probs[r * 7 + i], ref[i], 1e-12);
  }
}

SimilarityDistribution raw(std::vector<double> probs) {
  const std::size_t k = probs.size();
  std::vector<std::size_t> ids(k);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return {Tensor({1, k}, std::move(probs)), {ids}, 1.0};
}

TEST(KlDiv, SelfDivergenceIsZero) {
  Rng rng(5);
  const auto p = dist(unit_rows(4, 6, rng), unit_rows(9, 6, rng), 0.1);
  EXPECT_EQ(kl_div(p, p).item(), 0.0);
}

TEST(KlDiv, UniformAgainstNearOneHot) {
  const std::size_t k = 5;
  const double eps = 1e-3;
  std::vector<double> q(k, eps / static_cast<double>(k - 1));
  q[0] = 1.0 - eps;
  const auto pu = raw(std::vector<double>(k, 1.0 / k)), pq = raw(q);
  verify::Vec uv(k, 1.0 / k);
  EXPECT_NEAR(kl_div(pu, pq).item(), verify::reference_kl(uv, q), 1e-12);
}

TEST(KlDiv, NonNegativeOverRandomPairs) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Tensor anchors = unit_rows(8, 4, rng);
    const auto p = dist(unit_rows(1, 4, rng), anchors, 0.05 + uniform(rng, 0.0, 1.0));
    const auto q = dist(unit_rows(1, 4, rng), anchors, 0.05 + uniform(rng, 0.0, 1.0));
    EXPECT_GE(kl_div(p, q).item(), -1e-12);
  }
}

TEST(KlDiv, DifferentAnchorSetsAreContractError) {
  auto p = raw({0.5, 0.5});
  auto q = raw({0.5, 0.5});
  q.anchors[0] = {1, 0};
  EXPECT_THROW(kl_div(p, q), ContractError);
}

TEST(KlDiv, ZeroExactlyWhenDistributionsAgree) {
  const auto p = raw({0.2, 0.3, 0.5});
  EXPECT_LT(std::abs(kl_div(p, raw({0.2, 0.3 + 1e-12, 0.5 - 1e-12})).item()), 1e-9);
  EXPECT_GT(kl_div(p, raw({0.25, 0.25, 0.5})).item(), 1e-9);
}

TEST(KlDiv, TeacherReceivesNoGradient) {
  Rng rng(7);
  const Tensor anchors = unit_rows(6, 4, rng);
  Tensor zt = unit_rows(2, 4, rng, true), zs = unit_rows(2, 4, rng, true);
  kl_div(dist(zt, anchors, 0.05), dist(zs, anchors, 0.1)).backward();
  EXPECT_FALSE(zt.has_grad());
  EXPECT_TRUE(zs.has_grad());
}

struct ToyState {
  Tensor teacher_keys, student_queries;
  MemoryBank teacher_bank, student_bank;
};

ToyState toy(std::size_t n, std::size_t batch, std::size_t dim, Rng& rng) {
  ToyState s;
  s.teacher_keys = unit_rows(batch, dim, rng);
  s.student_queries = unit_rows(batch, dim, rng, true);
  s.teacher_bank = bank_from(unit_rows(n, dim, rng));
  s.student_bank = bank_from(unit_rows(n, dim, rng));
  return s;
}

TEST(MdLoss, IdenticalPartiesAtEqualTemperatureGiveZero) {
  Rng rng(8);
  const Tensor z = unit_rows(3, 5, rng);
  const MemoryBank bank = bank_from(unit_rows(16, 5, rng));
  EXPECT_NEAR(md_loss(z, bank, z, bank, 8, 0.1, 0.1).item(), 0.0, 1e-15);
}

TEST(MdLoss, MatchesReimplementationOracle) {
  Rng rng(9);
  const ToyState s = toy(32, 4, 6, rng);
  const double got = md_loss(s.teacher_keys, s.teacher_bank, s.student_queries, s.student_bank, 8, 0.05, 0.1).item();
  const double want = verify::reference_md_loss(to_rows(s.teacher_keys), to_rows(s.teacher_bank.keys_tensor()),
                                                to_rows(s.student_queries), to_rows(s.student_bank.keys_tensor()), 8,
                                                0.05, 0.1);
  EXPECT_NEAR(got, want, 1e-10);
}

TEST(MdLoss, ColdOrUnsynchronizedBanksRejected) {
  Rng rng(10);
  const ToyState s = toy(8, 2, 4, rng);
  EXPECT_THROW(md_loss(s.teacher_keys, s.teacher_bank, s.student_queries, s.student_bank, 9, 0.05, 0.1), ContractError);
  const std::vector<std::size_t> order{1, 0, 2, 3, 4, 5, 6, 7};
  const MemoryBank shuffled = bank_from(s.student_bank.keys_tensor(), &order);
  EXPECT_THROW(md_loss(s.teacher_keys, s.teacher_bank, s.student_queries, shuffled, 4, 0.05, 0.1), ContractError);
}

TEST(MdLoss, OnlyStudentQueryReceivesGradient) {
  Rng rng(11);
  ToyState s = toy(16, 3, 4, rng);
  Tensor tk = s.teacher_keys.detach().set_requires_grad(true);
  md_loss(tk, s.teacher_bank, s.student_queries, s.student_bank, 8, 0.05, 0.1).backward();
  EXPECT_FALSE(tk.has_grad());
  EXPECT_TRUE(s.student_queries.has_grad());
}

TEST(MdLossProperty, InvariantToCommonSlotPermutation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const std::size_t n = 24;
    const Tensor tk = unit_rows(3, 5, rng), sq = unit_rows(3, 5, rng);
    const Tensor tkeys = unit_rows(n, 5, rng), skeys = unit_rows(n, 5, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const double a = md_loss(tk, bank_from(tkeys), sq, bank_from(skeys), 10, 0.05, 0.1).item();
    const double b = md_loss(tk, bank_from(tkeys, &perm), sq, bank_from(skeys, &perm), 10, 0.05, 0.1).item();
    EXPECT_NEAR(a, b, 1e-12) << "seed " << seed;
  }
}

TEST(MutualDistillation, SumOfBothDirections) {
  Rng rng(12);
  const ToyState s = toy(20, 2, 5, rng);
  const Tensor other_key = unit_rows(2, 5, rng), other_query = unit_rows(2, 5, rng);
  const TemperatureSet t;
  const DistillParty a{s.student_queries, s.teacher_keys, &s.teacher_bank};
  const DistillParty b{other_query, other_key, &s.student_bank};
  const double both = mutual_distillation(a, b, 6, t).item();
  const double ab = md_loss(a.key, *a.bank, b.query, *b.bank, 6, t.teacher, t.student).item();
  const double ba = md_loss(b.key, *b.bank, a.query, *a.bank, 6, t.teacher, t.student).item();
  EXPECT_NEAR(both, ab + ba, 1e-14);
}

struct Parties {
  std::vector<Tensor> queries, keys;
  std::vector<MemoryBank> banks;
  std::vector<DistillParty> list() const {
    std::vector<DistillParty> out;
    for (std::size_t i = 0; i < queries.size(); ++i) out.push_back({queries[i], keys[i], &banks[i]});
    return out;
  }
};

Parties parties(std::size_t count, Rng& rng) {
  Parties p;
  for (std::size_t i = 0; i < count; ++i) {
    p.queries.push_back(unit_rows(3, 4, rng, true));
    p.keys.push_back(unit_rows(3, 4, rng));
    p.banks.push_back(bank_from(unit_rows(16, 4, rng)));
  }
  return p;
}

TEST(CmdLoss, IdenticalModalitiesAtEqualTemperatureGiveZero) {
  Rng rng(13);
  const Tensor z = unit_rows(3, 4, rng);
  const MemoryBank bank = bank_from(unit_rows(16, 4, rng));
  const std::vector<DistillParty> three(3, DistillParty{z, z, &bank});
  TemperatureSet t;
  t.teacher = t.student = 0.1;
  EXPECT_NEAR(cmd_loss(three, 8, t).item(), 0.0, 1e-15);
}

TEST(CmdLoss, ThreeModalitiesSumThreePairs) {
  Rng rng(14);
  const Parties p = parties(3, rng);
  const auto l = p.list();
  const TemperatureSet t;
  const double want = mutual_distillation(l[0], l[1], 8, t).item() + mutual_distillation(l[1], l[2], 8, t).item() +
                      mutual_distillation(l[2], l[0], 8, t).item();
  EXPECT_NEAR(cmd_loss(l, 8, t).item(), want, 1e-13);

  // Straight-line oracle over all six directed pairs.
  double oracle = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      if (a == b) continue;
      oracle += verify::reference_md_loss(to_rows(p.keys[a]), to_rows(p.banks[a].keys_tensor()), to_rows(p.queries[b]),
                                          to_rows(p.banks[b].keys_tensor()), 8, t.teacher, t.student);
    }
  }
  EXPECT_NEAR(cmd_loss(l, 8, t).item(), oracle, 1e-10);
}

TEST(CmdLoss, TwoModalitiesSingleTerm) {
  Rng rng(15);
  const Parties p = parties(2, rng);
  const auto l = p.list();
  EXPECT_EQ(cmd_loss(l, 8, TemperatureSet{}).item(), mutual_distillation(l[0], l[1], 8, TemperatureSet{}).item());
  const std::vector<DistillParty> one{l[0]};
  EXPECT_EQ(cmd_loss(one, 8, TemperatureSet{}).item(), 0.0);
}

TEST(ImdLoss, SameCodePathAsMutualDistillation) {
  Rng rng(16);
  const Parties p = parties(2, rng);
  const auto l = p.list();
  const TemperatureSet t;
  EXPECT_EQ(imd_loss(l[0], l[1], 8, t).item(), mutual_distillation(l[0], l[1], 8, t).item());
  const double oracle =
      verify::reference_md_loss(to_rows(p.keys[1]), to_rows(p.banks[1].keys_tensor()), to_rows(p.queries[0]),
                                to_rows(p.banks[0].keys_tensor()), 8, t.teacher, t.student) +
      verify::reference_md_loss(to_rows(p.keys[0]), to_rows(p.banks[0].keys_tensor()), to_rows(p.queries[1]),
                                to_rows(p.banks[1].keys_tensor()), 8, t.teacher, t.student);
  EXPECT_NEAR(imd_loss(l[0], l[1], 8, t).item(), oracle, 1e-10);
}

TEST(ImdLoss, IdenticalBranchesAtEqualTemperatureGiveZero) {
  Rng rng(17);
  const Tensor zq = unit_rows(2, 4, rng), zk = unit_rows(2, 4, rng);
  const MemoryBank idb = bank_from(unit_rows(12, 4, rng));
  TemperatureSet t;
  t.teacher = t.student = 0.1;
  // Same key and query in both parties: each direction compares a
  // distribution with itself.
  EXPECT_NEAR(imd_loss({zk, zk, &idb}, {zk, zk, &idb}, 6, t).item(), 0.0, 1e-15);
  EXPECT_GT(imd_loss({zq, zk, &idb}, {zq, zk, &idb}, 6, t).item(), 0.0);
}

IntraModalTerms terms(Modality m, double scl, double cluster, double imd) {
  return {m, Tensor::scalar(scl), Tensor::scalar(cluster), Tensor::scalar(imd)};
}

TEST(TotalLoss, HandSummedComponents) {
  const std::vector<IntraModalTerms> intra{terms(Modality::Joint, 1.0, 2.0, 3.0), terms(Modality::Motion, 0.5, 0.25, 0.125)};
  const TotalLoss t = total_loss(intra, Tensor::scalar(4.0), 0.5);
  EXPECT_DOUBLE_EQ(t.total.item(), 6.0 + 0.875 + 2.0);
  ASSERT_EQ(t.components.size(), 8u);
  EXPECT_EQ(t.components[0].name, "scl/joint");
  EXPECT_EQ(t.components[6].name, "cmd");
  EXPECT_EQ(t.components[6].value, 4.0);
  EXPECT_EQ(t.components[7].name, "total");
}

TEST(TotalLoss, ZeroLambdaDropsCmd) {
  const std::vector<IntraModalTerms> intra{terms(Modality::Joint, 1.0, 2.0, 3.0)};
  EXPECT_DOUBLE_EQ(total_loss(intra, Tensor::scalar(7.0), 0.0).total.item(), 6.0);
}

TEST(TotalLoss, LinearInLambdaWithSlopeCmd) {
  Rng rng(18);
  const std::vector<IntraModalTerms> intra{terms(Modality::Bone, 0.3, 0.7, 0.2)};
  const double cmd = 1.7;
  const double a = total_loss(intra, Tensor::scalar(cmd), 0.25).total.item();
  const double b = total_loss(intra, Tensor::scalar(cmd), 1.25).total.item();
  EXPECT_NEAR((b - a) / 1.0, cmd, 1e-14);
}

TEST(TotalLoss, NonFiniteComponentNamed) {
  const std::vector<IntraModalTerms> intra{terms(Modality::Motion, 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0)};
  try {
    total_loss(intra, Tensor{}, 0.5);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.component(), "scl_cluster/motion");
  }
  const std::vector<IntraModalTerms> ok{terms(Modality::Joint, 1.0, 1.0, 1.0)};
  EXPECT_THROW(total_loss(ok, Tensor::scalar(std::numeric_limits<double>::infinity()), 0.5), NonFiniteError);
}

TEST(TotalLoss, CompositeGradient) {
  Rng rng(19);
  const MemoryBank bank_a = bank_from(unit_rows(12, 4, rng)), bank_b = bank_from(unit_rows(12, 4, rng));
  const Tensor ka = unit_rows(2, 4, rng), kb = unit_rows(2, 4, rng);
  auto r = grad_check(
      [&](const std::vector<Tensor>& x) {
        const Tensor qa = l2_normalize(x[0]), qb = l2_normalize(x[1]);
        std::vector<IntraModalTerms> intra(2);
        intra[0] = {Modality::Joint, info_nce(qa, ka, bank_a.keys_tensor(), 0.07), {}, {}};
        intra[1] = {Modality::Motion, info_nce(qb, kb, bank_b.keys_tensor(), 0.07), {}, {}};
        const std::vector<DistillParty> p{{qa, ka, &bank_a}, {qb, kb, &bank_b}};
        return total_loss(intra, cmd_loss(p, 6, TemperatureSet{}), 0.5).total;
      },
      {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)});
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(PositiveMining, ConvergesOnRandomStates) {
  Rng rng(20);
  std::size_t checked = 0;
  while (checked < 10) {
    const std::size_t n = 8 + rng() % 57;
    const Tensor tk = unit_rows(1, 8, rng), sq = unit_rows(1, 8, rng);
    const MemoryBank tb = bank_from(unit_rows(n, 8, rng)), sb = bank_from(unit_rows(n, 8, rng));
    const TopK top = tb.top_k(tk.data(), 2);
    if (top.similarities[0] - top.similarities[1] < 0.02) continue;
    const auto report = positive_mining_equivalence_check(tk, tb, sq, sb, 0.1);
    EXPECT_TRUE(report.passed);
    EXPECT_TRUE(report.monotone);
    EXPECT_LT(report.abs_diff.back(), kDegenerationTolerance);
    EXPECT_EQ(report.mined_slot, top.indices[0]);
    ++checked;
  }
}

TEST(PositiveMining, TeacherTieIsContractError) {
  const Tensor tk({1, 2}, {1.0, 0.0});
  const MemoryBank b = bank_from(Tensor({2, 2}, {0.6, 0.8, 0.6, -0.8}));
  EXPECT_THROW(positive_mining_loss(tk, b, tk, b, 0.1), ContractError);
}

// With the positive's key planted in both banks and a student that agrees
// with the teacher, the mined slot is the planted one.
TEST(PositiveMining, MinesThePlantedPositive) {
  Rng rng(21);
  const std::size_t n = 16, planted = 11;
  Tensor tkeys = unit_rows(n, 8, rng), skeys = unit_rows(n, 8, rng);
  const Tensor z = unit_rows(1, 8, rng);
  for (std::size_t c = 0; c < 8; ++c) {
    tkeys.mutable_data()[planted * 8 + c] = z[c];
    skeys.mutable_data()[planted * 8 + c] = z[c];
  }
  std::size_t slot = n;
  positive_mining_loss(z, bank_from(tkeys), z, bank_from(skeys), 0.1, &slot);
  EXPECT_EQ(slot, planted);
}

TEST(InvariantMonitor, RecordsAndRejects) {
  InvariantMonitor m;
  m.check_distribution(Tensor({2, 2}, {0.25, 0.75, 0.5, 0.5}));
  m.check_kl(std::vector<double>{0.0, 0.3});
  m.check_unit_rows(Tensor({1, 2}, {0.6, 0.8}));
  EXPECT_EQ(m.distributions_checked(), 2u);
  EXPECT_EQ(m.kl_values_checked(), 2u);
  EXPECT_EQ(m.embeddings_checked(), 1u);
  EXPECT_EQ(m.min_probability(), 0.25);
  EXPECT_THROW(m.check_distribution(Tensor({1, 2}, {0.5, 0.6})), ContractError);
  EXPECT_THROW(m.check_distribution(Tensor({1, 2}, {0.0, 1.0})), ContractError);
  EXPECT_THROW(m.check_kl(std::vector<double>{-1e-9}), ContractError);
  EXPECT_THROW(m.check_unit_rows(Tensor({1, 2}, {1.0, 1.0})), ContractError);
}

}  // namespace
}  // namespace i2md
