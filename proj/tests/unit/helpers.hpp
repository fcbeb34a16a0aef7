#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "i2md/dataset.hpp"
#include "i2md/rng.hpp"
#include "i2md/tensor.hpp"
#include "i2md/trainer.hpp"

namespace i2md::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng, 0.0, scale);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

/// Rows drawn from N(0, I) and normalized to unit length.
inline Tensor unit_rows(std::size_t rows, std::size_t dim, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      v[r * dim + c] = normal(rng, 0.0, 1.0);
      n += v[r * dim + c] * v[r * dim + c];
    }
    n = std::sqrt(n);
    for (std::size_t c = 0; c < dim; ++c) v[r * dim + c] /= n;
  }
  return Tensor({rows, dim}, std::move(v), requires_grad);
}

/// Per-test scratch directory under the system temp dir, emptied on entry.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("i2md-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline DatasetConfig tiny_dataset_config(std::uint64_t seed = 1) {
  DatasetConfig c;
  c.num_classes = 3;
  c.train_per_class = 8;
  c.test_per_class = 4;
  c.frames = 8;
  c.seed = seed;
  return c;
}

/// Few-second training setup: banks fill after two steps of four.
inline TrainConfig tiny_train_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.encoder.gcn_channels = {4, 6};
  c.encoder.frames = 8;
  c.encoder.layers = 1;
  c.encoder.model_dim = 8;
  c.encoder.heads = 2;
  c.encoder.ffn_dim = 8;
  c.encoder.projection_dim = 6;
  c.bank_size = 8;
  c.k_c = 6;
  c.k_d = 3;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = seed;
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace i2md::testing
