#pragma once

// Parameter bundles shared by the network modules, their initializers, and
// name-based enumeration used by the optimizer and checkpoints.

#include <string>
#include <vector>

#include "msatr/rng.hpp"
#include "msatr/tensor.hpp"

namespace msatr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// weight[C_out,C_in,kh,kw], bias[C_out]
struct ConvParams {
  Tensor weight;
  Tensor bias;
};

// weight[in,out], bias[out]
struct LinearParams {
  Tensor weight;
  Tensor bias;
};

struct NormParams {
  Tensor gamma;
  Tensor beta;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ConvParams init_conv(std::size_t out_channels, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
                     Rng& rng, bool requires_grad = true);
LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng, bool requires_grad = true);
NormParams init_norm(std::size_t dim);
Tensor init_uniform(Shape shape, double bound, Rng& rng, bool requires_grad = true);
Tensor init_normal(Shape shape, double stddev, Rng& rng, bool requires_grad = true);

void collect(ParamList& out, const std::string& prefix, const ConvParams& p);
void collect(ParamList& out, const std::string& prefix, const LinearParams& p);
void collect(ParamList& out, const std::string& prefix, const NormParams& p);

std::size_t count_elements(const ParamList& params);
void zero_grads(const ParamList& params);

// Copies values from `source` into `target` by name; every target name must
// be present with an identical shape.
void copy_values(const ParamList& source, ParamList& target);

}  // namespace msatr
