#include "i2md/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "i2md/error.hpp"

namespace i2md {

double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckScaleFloor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double eps, double tol) {
  std::vector<Tensor> xs;
  xs.reserve(inputs.size());
  for (const auto& in : inputs) xs.push_back(in.detach().set_requires_grad(true));

  const Tensor out = f(xs);
  if (out.numel() != 1) {
    throw ContractError("grad_check: function output has shape " + shape_string(out.shape()) +
                        ", expected a scalar");
  }
  out.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& x : xs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.numel(), 0.0);  // unreachable input: gradient is zero
    }
  }

  // Finite differences on graph-free copies.
  std::vector<Tensor> probe;
  probe.reserve(xs.size());
  for (const auto& x : xs) probe.push_back(x.detach());

  GradCheckReport report;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto values = probe[t].mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f(probe).item();
      values[i] = saved - eps;
      const double down = f(probe).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      double err = gradient_relative_error(analytic[t][i], numeric);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      worst = std::max(worst, err);
    }
    report.max_rel_error.push_back(worst);
    report.max_error = std::max(report.max_error, worst);
  }
  report.passed = report.max_error < tol;
  return report;
}

}  // namespace i2md
