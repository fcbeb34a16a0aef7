#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "i2md/error.hpp"
#include "i2md/eval.hpp"
#include "i2md/verify/oracles.hpp"

namespace i2md {
namespace {

FeatureSet features(std::size_t n, std::size_t dim, int classes, Rng& rng) {
  FeatureSet f;
  f.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) f.features.push_back(normal(rng, 0.0, 1.0));
    f.labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(classes)));
  }
  return f;
}

verify::Rows rows_of(const FeatureSet& f) {
  verify::Rows r;
  for (std::size_t i = 0; i < f.count(); ++i) r.emplace_back(f.row(i).begin(), f.row(i).end());
  return r;
}

// Two Gaussian blobs around orthogonal centers.
FeatureSet blobs(std::size_t per_class, double spread, Rng& rng) {
  FeatureSet f;
  f.dim = 4;
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double center = static_cast<int>(c) == label ? 3.0 : 0.0;
        f.features.push_back(center + normal(rng, 0.0, spread));
      }
      f.labels.push_back(label);
    }
  }
  return f;
}

TEST(FeatureSet, ValidateCatchesMismatches) {
  FeatureSet f;
  f.dim = 2;
  f.features = {1.0, 2.0, 3.0};
  f.labels = {0, 1};
  EXPECT_ANY_THROW(f.validate());
  f.features = {1.0, 2.0, 3.0, std::nan("")};
  EXPECT_ANY_THROW(f.validate());
}

TEST(Knn, TestEqualsTrainIsPerfect) {
  Rng rng(1);
  const FeatureSet f = features(50, 8, 5, rng);
  EXPECT_EQ(knn_eval(f, f), 1.0);
}

TEST(Knn, OrthogonalClustersArePerfect) {
  Rng rng(2);
  EXPECT_EQ(knn_eval(blobs(20, 0.1, rng), blobs(10, 0.1, rng)), 1.0);
}

TEST(Knn, MatchesBruteForceOracle) {
  Rng rng(3);
  const FeatureSet train = features(200, 16, 8, rng), test = features(100, 16, 8, rng);
  EXPECT_EQ(knn_predict(train, test), verify::brute_force_knn(rows_of(train), train.labels, rows_of(test)));
}

TEST(Knn, InvariantToPositiveRescaling) {
  Rng rng(4);
  const FeatureSet train = features(60, 6, 4, rng), test = features(30, 6, 4, rng);
  FeatureSet scaled_train = train, scaled_test = test;
  for (double& v : scaled_train.features) v *= 7.5;
  for (double& v : scaled_test.features) v *= 0.01;
  EXPECT_EQ(knn_predict(train, test), knn_predict(scaled_train, scaled_test));
}

TEST(Knn, EmptyOrMismatchedSetsRejected) {
  Rng rng(5);
  const FeatureSet a = features(5, 4, 2, rng);
  EXPECT_ANY_THROW(knn_eval(FeatureSet{4, {}, {}, ""}, a));
  EXPECT_ANY_THROW(knn_eval(a, FeatureSet{4, {}, {}, ""}));
  EXPECT_ANY_THROW(knn_eval(a, features(5, 3, 2, rng)));
}

TEST(Knn, TieGoesToLowerTrainingIndex) {
  FeatureSet train{2, {1.0, 0.0, 2.0, 0.0}, {3, 5}, ""};
  FeatureSet test{2, {1.0, 0.0}, {5}, ""};
  EXPECT_EQ(knn_predict(train, test), (std::vector<int>{3}));
}

LinearProbeConfig quick_probe() {
  LinearProbeConfig c;
  c.epochs = 20;
  c.milestones = {15};
  return c;
}

TEST(LinearProbe, SeparableTwoClass) {
  Rng rng(6);
  const auto r = linear_probe(blobs(100, 0.5, rng), blobs(100, 0.5, rng), quick_probe());
  EXPECT_GT(r.accuracy, 0.99);
}

TEST(LinearProbe, ShuffledLabelsStayNearChance) {
  Rng rng(7);
  FeatureSet train = features(400, 16, 8, rng), test = features(200, 16, 8, rng);
  std::shuffle(train.labels.begin(), train.labels.end(), rng);
  const auto r = linear_probe(train, test, quick_probe());
  EXPECT_LT(r.accuracy, 3.0 / 8.0);
}

TEST(LinearProbe, LossFallsOverFirstEpochsOnEncoderFeatures) {
  const Dataset d = generate_dataset(testing::tiny_dataset_config());
  Rng rng(8);
  auto cfg = testing::tiny_train_config().encoder;
  const EncoderParams p = EncoderParams::init(cfg, rng);
  const FeatureSet train = extract_features(p, d.train, Modality::Joint, d.topology);
  const FeatureSet test = extract_features(p, d.test, Modality::Joint, d.topology);
  auto probe = quick_probe();
  probe.batch_size = 8;
  const auto r = linear_probe(train, test, probe);
  ASSERT_GE(r.epoch_losses.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.epoch_losses[e], r.epoch_losses[e - 1]) << "epoch " << e;
}

TEST(LinearProbe, Defaults) {
  const LinearProbeConfig c;
  EXPECT_EQ(c.epochs, 40u);
  EXPECT_EQ(c.milestones, (std::vector<std::size_t>{25, 35}));
}

TEST(ExtractFeatures, DeterministicShapeAndNoGradient) {
  const Dataset d = generate_dataset(testing::tiny_dataset_config());
  Rng rng(9);
  const EncoderParams p = EncoderParams::init(testing::tiny_train_config().encoder, rng);
  std::vector<double> before;
  for (const auto& [n, t] : p.named()) before.insert(before.end(), t.data().begin(), t.data().end());
  const FeatureSet a = extract_features(p, d.train, Modality::Motion, d.topology, "motion/idb/train", 5);
  const FeatureSet b = extract_features(p, d.train, Modality::Motion, d.topology, "motion/idb/train");
  EXPECT_EQ(a.count(), d.train.size());
  EXPECT_EQ(a.dim, p.config.model_dim);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.source, "motion/idb/train");
  std::vector<double> after;
  for (const auto& [n, t] : p.named()) {
    after.insert(after.end(), t.data().begin(), t.data().end());
    EXPECT_FALSE(t.has_grad()) << n;
  }
  EXPECT_EQ(before, after);
}

TEST(ExtractFeatures, TopologyMismatchRejected) {
  const Dataset d = generate_dataset(testing::tiny_dataset_config());
  Rng rng(10);
  const EncoderParams p = EncoderParams::init(testing::tiny_train_config().encoder, rng);
  EXPECT_ANY_THROW(extract_features(p, d.train, Modality::Joint, Topology({-1, 0, 1})));
}

TEST(ExtractFeatures, RandomEncoderBeatsChance) {
  DatasetConfig dc;
  dc.train_per_class = 20;
  dc.test_per_class = 10;
  const Dataset d = generate_dataset(dc);
  TrainConfig tc;
  tc.encoder = EncoderConfig::preset("small");
  const TrainState s = TrainState::init(tc, d.topology, d.train);
  const auto& q = s.models_for(Modality::Joint).query;
  const double acc = knn_eval(extract_features(q, d.train, Modality::Joint, d.topology),
                              extract_features(q, d.test, Modality::Joint, d.topology));
  EXPECT_GT(acc, 2.0 / static_cast<double>(dc.num_classes));
}

TEST(FeatureCsv, RoundTripsExactly) {
  Rng rng(11);
  FeatureSet f = features(12, 5, 3, rng);
  f.source = "bone/idb/test";
  const auto dir = testing::scratch_dir("features");
  write_features_csv(f, dir / "f.csv");
  const FeatureSet back = read_features_csv(dir / "f.csv");
  EXPECT_EQ(back.dim, f.dim);
  EXPECT_EQ(back.labels, f.labels);
  EXPECT_EQ(back.features, f.features);
  EXPECT_EQ(back.source, f.source);
  const std::string text = testing::read_file(dir / "f.csv");
  EXPECT_EQ(text.rfind("# i2md-features dim=5 count=12", 0), 0u);
}

}  // namespace
}  // namespace i2md
