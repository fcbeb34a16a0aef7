#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "i2md/encoder.hpp"
#include "i2md/tensor.hpp"

namespace i2md {

/// Step decay: lr = base * factor^(number of milestones <= epoch).
struct LrSchedule {
  double base_lr = 0.01;
  std::vector<std::size_t> milestones;  // epoch indices, 0-based
  double factor = 0.1;

  double at(std::size_t epoch) const;

  /// Single decay at floor(ratio * epochs), e.g. 400/500 -> ratio 0.8.
  static LrSchedule step_at_fraction(double base_lr, std::size_t epochs, double ratio = 0.8, double factor = 0.1);
};

/// SGD with momentum and L2 weight decay; velocity buffers keyed by
/// parameter name.
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::map<std::string, std::vector<double>> velocity;

  void validate() const;

  void write(std::ostream& os) const;
  static OptimizerState read(std::istream& is);

  bool operator==(const OptimizerState&) const = default;
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v;
/// the gradient is then cleared. Every listed parameter must hold a gradient.
void sgd_step(OptimizerState& opt, std::span<const NamedTensor> params);

/// theta_k <- alpha * theta_k + (1 - alpha) * theta_q, in place, no graph.
void momentum_update(std::span<const NamedTensor> key_params, std::span<const NamedTensor> query_params,
                     double alpha);

}  // namespace i2md
