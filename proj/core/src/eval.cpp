#include "i2md/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "i2md/error.hpp"
#include "i2md/ops.hpp"
#include "i2md/optimizer.hpp"
#include "i2md/rng.hpp"

namespace i2md {
namespace {

void require_compatible(const FeatureSet& train, const FeatureSet& test) {
  train.validate();
  test.validate();
  if (train.count() == 0 || test.count() == 0) throw ContractError("evaluation needs non-empty train and test sets");
  if (train.dim != test.dim) {
    throw DimensionError("feature dims differ: " + std::to_string(train.dim) + " vs " + std::to_string(test.dim));
  }
}

std::vector<double> normalized_rows(const FeatureSet& fs) {
  std::vector<double> out(fs.features);
  for (std::size_t r = 0; r < fs.count(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < fs.dim; ++c) sq += out[r * fs.dim + c] * out[r * fs.dim + c];
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw DegenerateInputError("knn: feature row " + std::to_string(r) + " has zero norm");
    for (std::size_t c = 0; c < fs.dim; ++c) out[r * fs.dim + c] /= norm;
  }
  return out;
}

}  // namespace

void FeatureSet::validate() const {
  if (features.size() != labels.size() * dim) {
    throw DimensionError("feature set: " + std::to_string(features.size()) + " values for " +
                         std::to_string(labels.size()) + " rows of dim " + std::to_string(dim));
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw NonFiniteError("features", "feature set contains non-finite values");
  }
}

FeatureSet extract_features(const EncoderParams& params, std::span<const SkeletonSequence> sequences,
                            Modality modality, const Topology& topology, const std::string& source,
                            std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("extract_features: batch_size must be >= 1");
  const EncoderParams frozen = params.clone(false);
  FeatureSet out;
  out.dim = params.config.model_dim;
  out.source = source;
  out.features.reserve(sequences.size() * out.dim);
  for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, sequences.size() - start);
    std::vector<SkeletonSequence> derived;
    derived.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = sequences[start + i];
      if (s.joints != topology.joint_count()) throw DimensionError("extract_features: sequence/topology mismatch");
      derived.push_back(derive_modality(s, modality, topology));
      out.labels.push_back(s.label);
    }
    const Tensor hidden = transformer_forward(frozen, gcn_forward(frozen, pack_batch(derived), topology), n);
    out.features.insert(out.features.end(), hidden.data().begin(), hidden.data().end());
  }
  return out;
}

std::vector<int> knn_predict(const FeatureSet& train, const FeatureSet& test) {
  require_compatible(train, test);
  const auto a = normalized_rows(train);
  const auto b = normalized_rows(test);
  const std::size_t dim = train.dim;
  std::vector<int> pred(test.count());
  for (std::size_t t = 0; t < test.count(); ++t) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < train.count(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += b[t * dim + c] * a[r * dim + c];
      if (s > best_sim) {
        best_sim = s;
        best = r;
      }
    }
    pred[t] = train.labels[best];
  }
  return pred;
}

double knn_eval(const FeatureSet& train, const FeatureSet& test) {
  const auto pred = knn_predict(train, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

void LinearProbeConfig::validate() const {
  if (batch_size == 0) throw ConfigError("linear probe batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("linear probe learning rate must be > 0");
  OptimizerState{learning_rate, momentum, weight_decay, {}}.validate();
}

LinearProbeResult linear_probe(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& config) {
  require_compatible(train, test);
  config.validate();
  const std::size_t dim = train.dim;
  int max_label = 0;
  for (int l : train.labels) {
    if (l < 0) throw ContractError("linear probe: negative label");
    max_label = std::max(max_label, l);
  }
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<double> mu(dim, 0.0), sigma(dim, 1.0);
  if (config.standardize) {
    for (std::size_t r = 0; r < train.count(); ++r) {
      for (std::size_t c = 0; c < dim; ++c) mu[c] += train.features[r * dim + c];
    }
    for (auto& m : mu) m /= static_cast<double>(train.count());
    std::vector<double> var(dim, 0.0);
    for (std::size_t r = 0; r < train.count(); ++r) {
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = train.features[r * dim + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < dim; ++c) sigma[c] = std::max(std::sqrt(var[c] / static_cast<double>(train.count())), 1e-8);
  }
  auto standardized = [&](const FeatureSet& fs, std::size_t r, std::size_t c) {
    return (fs.features[r * dim + c] - mu[c]) / sigma[c];
  };

  Tensor weight = Tensor::zeros({dim, classes}, true);
  Tensor bias = Tensor::zeros({classes}, true);
  const std::vector<NamedTensor> params{{"weight", weight}, {"bias", bias}};
  OptimizerState opt{config.learning_rate, config.momentum, config.weight_decay, {}};
  LrSchedule schedule{config.learning_rate, config.milestones, config.decay_factor};
  Rng rng(derive_seed(config.seed, 0x2001));

  LinearProbeResult result;
  std::vector<std::size_t> order(train.count());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    opt.learning_rate = schedule.at(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<double> x(n * dim), onehot(n * classes, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = order[start + i];
        for (std::size_t c = 0; c < dim; ++c) x[i * dim + c] = standardized(train, r, c);
        onehot[i * classes + static_cast<std::size_t>(train.labels[r])] = 1.0;
      }
      const Tensor logits = add_row_bias(matmul(Tensor({n, dim}, std::move(x)), weight), bias);
      const Tensor loss =
          scale(mean(sum_last(mul(Tensor({n, classes}, std::move(onehot)), log_softmax(logits, 1)))), -1.0);
      loss.backward();
      sgd_step(opt, params);
      loss_sum += loss.item();
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }

  std::size_t correct = 0;
  const auto w = weight.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < test.count(); ++r) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes; ++k) {
      double s = bv[k];
      for (std::size_t c = 0; c < dim; ++c) s += standardized(test, r, c) * w[c * classes + k];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    correct += static_cast<int>(best) == test.labels[r];
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test.count());
  return result;
}

void write_features_csv(const FeatureSet& fs, const std::filesystem::path& path) {
  fs.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# i2md-features dim=" << fs.dim << " count=" << fs.count() << " source=" << fs.source << '\n';
  os << "label";
  for (std::size_t c = 0; c < fs.dim; ++c) os << ",f" << c;
  os << '\n';
  char buf[32];
  for (std::size_t r = 0; r < fs.count(); ++r) {
    os << fs.labels[r];
    for (double v : fs.row(r)) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

FeatureSet read_features_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string header;
  std::getline(is, header);
  FeatureSet fs;
  std::size_t count = 0;
  {
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;
    if (tok != "#") throw IoError(path.string() + " is not a feature CSV");
    hs >> tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "dim") fs.dim = std::stoul(val);
      else if (key == "count") count = std::stoul(val);
      else if (key == "source") fs.source = val;
    }
  }
  std::string line;
  std::getline(is, line);  // column names
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    fs.labels.push_back(std::stoi(cell));
    std::size_t n = 0;
    while (std::getline(ls, cell, ',')) {
      fs.features.push_back(std::strtod(cell.c_str(), nullptr));
      ++n;
    }
    if (n != fs.dim) throw IoError("feature CSV row has " + std::to_string(n) + " values, expected " + std::to_string(fs.dim));
  }
  if (fs.count() != count) throw IoError("feature CSV row count differs from header");
  fs.validate();
  return fs;
}

}  // namespace i2md
