#pragma once

#include <functional>
#include <vector>

#include "i2md/tensor.hpp"

namespace i2md {

struct GradCheckReport {
  /// Largest relative error per input tensor.
  std::vector<double> max_rel_error;
  double max_error = 0.0;
  bool passed = false;
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckScaleFloor).
/// The floor keeps near-zero gradients from turning rounding noise into
/// huge ratios.
double gradient_relative_error(double analytic, double numeric);

inline constexpr double kGradCheckScaleFloor = 1e-2;

/// Compares reverse-mode gradients of `f` with central differences.
/// Inputs are cloned; the caller's tensors are not touched. `f` must be
/// deterministic and return a single-element tensor.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace i2md
