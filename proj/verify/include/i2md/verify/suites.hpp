#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace i2md::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool passed() const;
};

/// Finite-difference checks of every differentiable op and every composite
/// loss, `seeds` random instances each, f64, tol 1e-4.
SuiteReport run_gradient_suite(std::size_t seeds = 20, std::uint64_t base_seed = 1);

/// Low-temperature degeneration of md_loss onto the positive-mining form on
/// `states` random toy banks, plus the injected one-hot and
/// controlled-positive constructions.
SuiteReport run_degeneration_suite(std::size_t states = 10, std::uint64_t base_seed = 1);

/// Top-K, FIFO, KNN and loss values against the reference implementations.
SuiteReport run_oracle_suite(std::uint64_t base_seed = 1);

SuiteReport run_suite(const std::string& name);

/// One line per check: PASS/FAIL, name, max error, detail.
void print_report(std::ostream& os, const SuiteReport& report);

}  // namespace i2md::verify
