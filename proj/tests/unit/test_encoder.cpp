#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "i2md/encoder.hpp"
#include "i2md/error.hpp"
#include "i2md/grad_check.hpp"
#include "i2md/ops.hpp"

namespace i2md {
namespace {

using testing::random_tensor;

EncoderConfig small_config(bool cross = false) {
  EncoderConfig c;
  c.gcn_channels = {4, 6, 5};
  c.frames = 4;
  c.layers = 2;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 12;
  c.projection_dim = 6;
  c.has_cross_attention = cross;
  return c;
}

Tensor random_input(std::size_t batch, std::size_t frames, std::size_t joints, Rng& rng) {
  return random_tensor({batch * frames * joints, 3}, rng, false);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(EncoderConfig, Presets) {
  const auto desk = EncoderConfig::preset("desk");
  EXPECT_EQ(desk.gcn_channels.size(), 3u);
  EXPECT_EQ(desk.layers, 2u);
  EXPECT_EQ(desk.model_dim, 64u);
  EXPECT_EQ(desk.heads, 4u);
  EXPECT_EQ(desk.ffn_dim, 128u);
  EXPECT_EQ(desk.projection_dim, 32u);
  const auto full = EncoderConfig::preset("full");
  EXPECT_EQ(full.layers, 6u);
  EXPECT_EQ(full.model_dim, 768u);
  EXPECT_EQ(full.heads, 12u);
  EXPECT_EQ(full.ffn_dim, 3072u);
  EXPECT_EQ(full.projection_dim, 128u);
  EXPECT_NO_THROW(EncoderConfig::preset("small").validate());
  EXPECT_THROW(EncoderConfig::preset("huge"), ConfigError);
}

TEST(EncoderConfig, HeadsMustDivideModelDim) {
  auto c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncoderParams, CrossAttentionExistsIffConfigured) {
  Rng rng(1);
  const auto plain = EncoderParams::init(small_config(false), rng);
  const auto cross = EncoderParams::init(small_config(true), rng);
  for (const auto& l : plain.layers) EXPECT_FALSE(l.cross_attention.has_value());
  for (const auto& l : cross.layers) EXPECT_TRUE(l.cross_attention.has_value());
  EXPECT_GT(cross.named().size(), cross.named_instance_branch().size());
  EXPECT_EQ(plain.named().size(), plain.named_instance_branch().size());
}

TEST(EncoderParams, NamesAreUniqueAndCloneIsIndependent) {
  Rng rng(2);
  const auto p = EncoderParams::init(small_config(true), rng);
  auto named = p.named();
  std::vector<std::string> names;
  for (const auto& [n, t] : named) {
    names.push_back(n);
    EXPECT_TRUE(t.requires_grad()) << n;
  }
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());

  auto frozen = p.clone(false);
  for (const auto& [n, t] : frozen.named()) EXPECT_FALSE(t.requires_grad()) << n;
  Tensor w = frozen.gcn[0].weight;
  w.mutable_data()[0] += 1.0;
  EXPECT_NE(p.gcn[0].weight[0], frozen.gcn[0].weight[0]);
}

TEST(GcnForward, OutputShapeIsFramesByModelDim) {
  Rng rng(3);
  const Topology topo = Topology::humanoid9();
  const auto p = EncoderParams::init(small_config(), rng);
  const Tensor tokens = gcn_forward(p, random_input(2, 4, 9, rng), topo);
  EXPECT_EQ(tokens.shape(), (Shape{8, 8}));
}

TEST(GcnForward, WrongJointCountIsDimensionError) {
  Rng rng(4);
  const auto p = EncoderParams::init(small_config(), rng);
  EXPECT_THROW(gcn_forward(p, random_tensor({4 * 7, 3}, rng, false), Topology::humanoid9()), DimensionError);
}

TEST(GcnForward, ZeroInputWithZeroBiasGivesZeroTokens) {
  Rng rng(5);
  auto p = EncoderParams::init(small_config(), rng);
  for (auto& l : p.gcn) std::fill(l.bias.mutable_data().begin(), l.bias.mutable_data().end(), 0.0);
  std::fill(p.reduce.bias.mutable_data().begin(), p.reduce.bias.mutable_data().end(), 0.0);
  const Tensor tokens = gcn_forward(p, Tensor::zeros({4 * 9, 3}), Topology::humanoid9());
  for (double v : tokens.data()) EXPECT_EQ(v, 0.0);
}

// Relabel joints with a permutation; the parent array, adjacency and input
// rows move together, so the mean-pooled tokens must not change.
TEST(GcnForward, JointPermutationEquivariance) {
  Rng rng(6);
  const Topology topo = Topology::humanoid9();
  const auto p = EncoderParams::init(small_config(), rng);
  const std::vector<std::size_t> perm{4, 0, 8, 2, 6, 1, 3, 7, 5};  // new index of old joint j
  std::vector<int> parents(9);
  for (std::size_t j = 0; j < 9; ++j) {
    const int old_parent = topo.parent(j);
    parents[perm[j]] = old_parent < 0 ? -1 : static_cast<int>(perm[static_cast<std::size_t>(old_parent)]);
  }
  const Topology permuted(parents);
  const Tensor x = random_input(1, 4, 9, rng);
  std::vector<double> moved(x.numel());
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 9; ++j) {
      for (std::size_t k = 0; k < 3; ++k) moved[(t * 9 + perm[j]) * 3 + k] = x[(t * 9 + j) * 3 + k];
    }
  }
  expect_close(gcn_forward(p, x, topo), gcn_forward(p, Tensor(x.shape(), moved), permuted), 1e-9);
}

TEST(TransformerForward, OutputIsBatchByModelDim) {
  Rng rng(7);
  const auto p = EncoderParams::init(small_config(), rng);
  const Tensor h = transformer_forward(p, random_tensor({3 * 4, 8}, rng, false), 3);
  EXPECT_EQ(h.shape(), (Shape{3, 8}));
}

TEST(TransformerForward, NeighborsWithoutCrossAttentionIsContractError) {
  Rng rng(8);
  const auto p = EncoderParams::init(small_config(false), rng);
  const Tensor n = random_tensor({2, 8}, rng, false);
  EXPECT_THROW(transformer_forward(p, random_tensor({4, 8}, rng, false), 1, &n), ContractError);
}

TEST(TransformerForward, ZeroNeighborsWithZeroOutBiasPassThrough) {
  Rng rng(9);
  auto p = EncoderParams::init(small_config(true), rng);
  for (auto& l : p.layers) {
    auto b = l.cross_attention->out.bias.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
  const Tensor tokens = random_tensor({2 * 4, 8}, rng, false);
  const Tensor zeros = Tensor::zeros({2 * 3, 8});
  expect_close(transformer_forward(p, tokens, 2, &zeros), transformer_forward(p, tokens, 2), 1e-14);
}

TEST(TransformerForward, TokenOrderIrrelevantWithoutPositions) {
  Rng rng(10);
  auto cfg = small_config();
  cfg.positional = false;
  const auto p = EncoderParams::init(cfg, rng);
  const Tensor tokens = random_tensor({4, 8}, rng, false);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  expect_close(transformer_forward(p, tokens, 1), transformer_forward(p, gather(tokens, order), 1), 1e-12);
}

TEST(TransformerForward, TokenOrderMattersWithPositions) {
  Rng rng(11);
  auto p = EncoderParams::init(small_config(), rng);
  for (double& v : p.position.mutable_data()) v *= 50.0;
  const Tensor tokens = random_tensor({4, 8}, rng, false);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const Tensor a = transformer_forward(p, tokens, 1);
  const Tensor b = transformer_forward(p, gather(tokens, order), 1);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(Project, RowsAreUnitNorm) {
  Rng rng(12);
  const auto p = EncoderParams::init(small_config(), rng);
  const Tensor z = project(p, random_tensor({100, 8}, rng, false));
  for (std::size_t r = 0; r < 100; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 6; ++c) n += z[r * 6 + c] * z[r * 6 + c];
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
}

TEST(Project, NotScaleInvariant) {
  Rng rng(13);
  auto p = EncoderParams::init(small_config(), rng);
  // Biases start at zero, which would make the head positively homogeneous.
  for (double& v : p.head_hidden.bias.mutable_data()) v = normal(rng, 0.0, 1.0);
  const Tensor h = random_tensor({1, 8}, rng, false);
  const Tensor a = project(p, h), b = project(p, scale(h, 2.0));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Project, NormHasZeroGradient) {
  Rng rng(14);
  const auto p = EncoderParams::init(small_config(), rng).clone(false);
  auto r = grad_check(
      [&](const std::vector<Tensor>& x) {
        const Tensor z = project(p, x[0]);
        return sum(mul(z, z));
      },
      {random_tensor({1, 8}, rng)});
  EXPECT_TRUE(r.passed) << r.max_error;
  Tensor h = random_tensor({1, 8}, rng);
  const Tensor z = project(p, h);
  sum(mul(z, z)).backward();
  for (double g : h.grad()) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Encoder, PipelineGradientOnTwoSequenceBatch) {
  Rng rng(15);
  const Topology topo = Topology::humanoid9();
  auto cfg = small_config();
  cfg.gcn_channels = {3, 4};
  cfg.layers = 1;
  const auto p = EncoderParams::init(cfg, rng);
  const auto named = p.named();
  std::vector<Tensor> inputs;
  for (const auto& [n, t] : named) inputs.push_back(t.detach());
  const Tensor x = random_input(2, 4, 9, rng);
  const Tensor w = random_tensor({2, 6}, rng, false);
  auto r = grad_check(
      [&](const std::vector<Tensor>& t) {
        const auto q = p.with_tensors(t);
        return sum(mul(encode(q, x, 2, topo).embedding, w));
      },
      inputs);
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(Encoder, SharedWeightsAffectBothBranchesCrossWeightsOnlyCluster) {
  Rng rng(16);
  const Topology topo = Topology::humanoid9();
  const auto p = EncoderParams::init(small_config(true), rng);
  const Tensor x = random_input(1, 4, 9, rng);
  const Tensor neighbors = random_tensor({3, 8}, rng, false);
  const Tensor idb = encode(p, x, 1, topo).hidden;
  const Tensor cdb = encode(p, x, 1, topo, &neighbors).hidden;

  auto shared = p.clone(true);
  shared.layers[0].ffn_in.weight.mutable_data()[0] += 0.5;
  auto cross = p.clone(true);
  cross.layers[0].cross_attention->value.mutable_data()[0] += 0.5;

  auto differs = [](const Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.numel(); ++i) {
      if (a[i] != b[i]) return true;
    }
    return false;
  };
  EXPECT_TRUE(differs(idb, encode(shared, x, 1, topo).hidden));
  EXPECT_TRUE(differs(cdb, encode(shared, x, 1, topo, &neighbors).hidden));
  EXPECT_FALSE(differs(idb, encode(cross, x, 1, topo).hidden));
  EXPECT_TRUE(differs(cdb, encode(cross, x, 1, topo, &neighbors).hidden));
}

TEST(InputNormalization, StandardizesTrainingChannels) {
  const auto d = generate_dataset(testing::tiny_dataset_config());
  for (Modality m : kAllModalities) {
    const auto n = fit_input_normalization(d.train, m, d.topology);
    ASSERT_EQ(n.mean.size(), 27u);
    std::vector<double> s(27, 0.0), sq(27, 0.0);
    std::size_t rows = 0;
    for (const auto& raw : d.train) {
      const auto seq = derive_modality(raw, m, d.topology);
      for (std::size_t t = 0; t < seq.frames; ++t, ++rows) {
        for (std::size_t c = 0; c < 27; ++c) {
          const double v = (seq.coords[t * 27 + c] - n.mean[c]) * n.scale[c];
          s[c] += v;
          sq[c] += v * v;
        }
      }
    }
    for (std::size_t c = 0; c < 27; ++c) {
      EXPECT_NEAR(s[c] / static_cast<double>(rows), 0.0, 1e-9);
      const double var = sq[c] / static_cast<double>(rows);
      // The root bone is identically zero and keeps scale 1.
      if (m == Modality::Bone && c / 3 == d.topology.root()) {
        EXPECT_EQ(n.scale[c], 1.0);
      } else {
        EXPECT_NEAR(var, 1.0, 1e-9);
      }
    }
  }
}

TEST(InputNormalization, AppliedBeforeFirstGraphConvolution) {
  Rng rng(17);
  const Topology topo = Topology::humanoid9();
  auto p = EncoderParams::init(small_config(), rng);
  InputNormalization n;
  for (std::size_t c = 0; c < 27; ++c) {
    n.mean.push_back(0.1 * static_cast<double>(c));
    n.scale.push_back(1.0 + 0.05 * static_cast<double>(c));
  }
  const Tensor x = random_input(2, 4, 9, rng);
  std::vector<double> manual(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) manual[i] = (x[i] - n.mean[i % 27]) * n.scale[i % 27];
  const Tensor expected = gcn_forward(p, Tensor(x.shape(), manual), topo);
  p.input_norm = n;
  expect_close(gcn_forward(p, x, topo), expected, 1e-12);
  p.input_norm->mean.pop_back();
  EXPECT_THROW(gcn_forward(p, x, topo), DimensionError);
}

}  // namespace
}  // namespace i2md
