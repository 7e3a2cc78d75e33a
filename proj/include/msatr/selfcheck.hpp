#pragma once

// Built-in verification suite run by `msatr selfcheck`.

#include <functional>
#include <string>
#include <vector>

#include "msatr/tensor.hpp"

namespace msatr {

struct CheckOutcome {
  bool passed = false;
  std::string detail;
};

struct SelfCheck {
  std::string name;
  std::function<CheckOutcome()> run;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr double kGradTolerance = 1e-4;

// Central-difference check of f at a seeded random input of `shape`, with
// entries in [lo, hi] kept at least 1e-3 away from zero (relu kinks).
SelfCheck gradient_check(std::string name, std::function<Tensor(const Tensor&)> f, Shape shape, std::uint64_t seed,
                         double lo = -1.0, double hi = 1.0);

std::vector<SelfCheck> builtin_checks();
// A squaring op whose backward rule is deliberately wrong; its gradient
// check must fail.
SelfCheck faulty_backward_check();

// Runs every check; exceptions count as failures. `progress` sees each result.
std::vector<CheckResult> run_checks(const std::vector<SelfCheck>& checks,
                                    const std::function<void(const CheckResult&)>& progress = {});

}  // namespace msatr
