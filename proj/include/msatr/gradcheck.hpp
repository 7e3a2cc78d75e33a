#pragma once

// Central-difference gradient verification against the tape.

#include <functional>
#include <optional>

#include "msatr/params.hpp"
#include "msatr/rng.hpp"
#include "msatr/tensor.hpp"

namespace msatr {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Location of the worst entry: parameter name (empty for a single input) and flat index.
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Relative error |a-b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

// f must map x to a single-element tensor and be smooth near x (keep inputs
// away from relu kinks). Every entry of x is checked.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);
GradCheckResult finite_diff_check_detailed(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                           double h = 1e-5);

// Checks d loss / d param for every tensor in `params` by perturbing values in
// place. With `per_tensor`, only that many randomly chosen entries of each
// tensor are checked.
GradCheckResult finite_diff_check_params(const std::function<Tensor()>& loss, const ParamList& params,
                                         double h = 1e-5, std::optional<std::size_t> per_tensor = std::nullopt,
                                         Rng* rng = nullptr);

}  // namespace msatr
