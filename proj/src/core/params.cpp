#include "msatr/params.hpp"

#include <cmath>
#include <unordered_map>

#include "msatr/errors.hpp"

namespace msatr {

Tensor init_uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor init_normal(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

ConvParams init_conv(std::size_t out_channels, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
                     Rng& rng, bool requires_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel_h * kernel_w));
  return {init_uniform({out_channels, in_channels, kernel_h, kernel_w}, bound, rng, requires_grad),
          Tensor::zeros({out_channels}, requires_grad)};
}

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng, bool requires_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {init_uniform({in, out}, bound, rng, requires_grad), Tensor::zeros({out}, requires_grad)};
}

NormParams init_norm(std::size_t dim) { return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)}; }

void collect(ParamList& out, const std::string& prefix, const ConvParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  if (p.bias.defined()) out.push_back({prefix + ".bias", p.bias});
}

void collect(ParamList& out, const std::string& prefix, const LinearParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  if (p.bias.defined()) out.push_back({prefix + ".bias", p.bias});
}

void collect(ParamList& out, const std::string& prefix, const NormParams& p) {
  out.push_back({prefix + ".gamma", p.gamma});
  out.push_back({prefix + ".beta", p.beta});
}

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void zero_grads(const ParamList& params) {
  for (auto p : params) p.tensor.zero_grad();
}

void copy_values(const ParamList& source, ParamList& target) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name.emplace(s.name, &s.tensor);
  for (auto& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw ConfigError("missing parameter '" + t.name + "'");
    const Tensor& src = *it->second;
    if (src.shape() != t.tensor.shape()) {
      throw ConfigError("parameter '" + t.name + "' has shape " + shape_to_string(src.shape()) + ", expected " +
                        shape_to_string(t.tensor.shape()));
    }
    auto dst = t.tensor.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

}  // namespace msatr
