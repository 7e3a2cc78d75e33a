#include "msatr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msatr/errors.hpp"

namespace msatr {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const Tensor v = loss();
  if (v.numel() != 1) throw ContractError("finite_diff_check: function must return a single element");
  return v.item();
}

void check_entries(const std::function<Tensor()>& loss, Tensor param, const std::string& name,
                   std::span<const double> analytic, const std::vector<std::size_t>& entries, double h,
                   GradCheckResult& result) {
  auto values = param.mutable_data();
  for (std::size_t i : entries) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = evaluate(loss);
    values[i] = saved - h;
    const double minus = evaluate(loss);
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double err = relative_error(a, numeric);
    ++result.checked;
    if (result.checked == 1 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_name = name;
      result.worst_index = i;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
}

}  // namespace

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckResult finite_diff_check_detailed(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  Tensor leaf = x.clone(/*requires_grad=*/true);
  const Tensor out = f(leaf);
  if (out.numel() != 1) throw ContractError("finite_diff_check: function must return a single element");
  out.backward();
  const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  std::vector<std::size_t> all(leaf.numel());
  std::iota(all.begin(), all.end(), std::size_t{0});
  GradCheckResult result;
  check_entries([&] { return f(leaf); }, leaf, "", analytic, all, h, result);
  return result;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  return finite_diff_check_detailed(f, x, h).max_rel_error;
}

GradCheckResult finite_diff_check_params(const std::function<Tensor()>& loss, const ParamList& params, double h,
                                         std::optional<std::size_t> per_tensor, Rng* rng) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  if (per_tensor && !rng) throw ContractError("finite_diff_check_params: entry sampling needs an Rng");
  zero_grads(params);
  const Tensor out = loss();
  if (out.numel() != 1) throw ContractError("finite_diff_check: function must return a single element");
  out.backward();
  GradCheckResult result;
  for (const auto& [name, tensor] : params) {
    const std::vector<double> analytic =
        tensor.has_grad() ? std::vector<double>(tensor.grad().begin(), tensor.grad().end()) : std::vector<double>{};
    std::vector<std::size_t> entries;
    if (per_tensor && *per_tensor < tensor.numel()) {
      for (std::size_t i = 0; i < *per_tensor; ++i) entries.push_back(rng->uniform_index(tensor.numel()));
    } else {
      entries.resize(tensor.numel());
      std::iota(entries.begin(), entries.end(), std::size_t{0});
    }
    check_entries(loss, tensor, name, analytic, entries, h, result);
  }
  return result;
}

}  // namespace msatr
