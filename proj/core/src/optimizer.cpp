#include "i2md/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "i2md/error.hpp"

namespace i2md {

double LrSchedule::at(std::size_t epoch) const {
  double lr = base_lr;
  for (auto m : milestones) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

LrSchedule LrSchedule::step_at_fraction(double base_lr, std::size_t epochs, double ratio, double factor) {
  LrSchedule s;
  s.base_lr = base_lr;
  s.factor = factor;
  s.milestones.push_back(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(epochs))));
  return s;
}

void OptimizerState::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

void sgd_step(OptimizerState& opt, std::span<const NamedTensor> params) {
  opt.validate();
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw ContractError("sgd_step: parameter " + name + " has no gradient");
  }
  for (const auto& [name, p] : params) {
    Tensor t = p;
    auto& v = opt.velocity[name];
    if (v.empty()) v.assign(t.numel(), 0.0);
    if (v.size() != t.numel()) throw DimensionError("sgd_step: velocity size mismatch for " + name);
    const auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = opt.momentum * v[i] + (g[i] + opt.weight_decay * w[i]);
      w[i] -= opt.learning_rate * v[i];
    }
    t.clear_grad();
  }
}

void momentum_update(std::span<const NamedTensor> key_params, std::span<const NamedTensor> query_params,
                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("momentum_update: alpha must lie in [0, 1]");
  if (key_params.size() != query_params.size()) {
    throw DimensionError("momentum_update: " + std::to_string(key_params.size()) + " key tensors vs " +
                         std::to_string(query_params.size()) + " query tensors");
  }
  for (std::size_t i = 0; i < key_params.size(); ++i) {
    const auto& [kname, k] = key_params[i];
    const auto& [qname, q] = query_params[i];
    if (kname != qname || k.shape() != q.shape()) {
      throw DimensionError("momentum_update: " + kname + " " + shape_string(k.shape()) + " vs " + qname + " " +
                           shape_string(q.shape()));
    }
    Tensor target = k;
    auto dst = target.mutable_data();
    const auto src = q.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = alpha * dst[j] + (1.0 - alpha) * src[j];
  }
}

void OptimizerState::write(std::ostream& os) const {
  io::write_pod(os, learning_rate);
  io::write_pod(os, momentum);
  io::write_pod(os, weight_decay);
  io::write_pod<std::uint64_t>(os, velocity.size());
  for (const auto& [name, v] : velocity) {
    io::write_string(os, name);
    io::write_vector(os, v);
  }
}

OptimizerState OptimizerState::read(std::istream& is) {
  OptimizerState s;
  s.learning_rate = io::read_pod<double>(is);
  s.momentum = io::read_pod<double>(is);
  s.weight_decay = io::read_pod<double>(is);
  const auto n = io::read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = io::read_string(is, 1 << 16);
    s.velocity.emplace(std::move(name), io::read_vector<double>(is));
  }
  return s;
}

}  // namespace i2md
