#pragma once

// The enhancement network: local and global attention branches run in
// parallel on the raw image, their features are stacked along channels and
// fused by conv3x3 -> leaky_relu -> conv3x3 -> leaky_relu -> conv1x1 -> sigmoid.

#include <cstdint>
#include <optional>
#include <string_view>

#include "msatr/attention.hpp"
#include "msatr/params.hpp"

namespace msatr {

enum class GeneratorVariant {
  Full,
  LocalOnly,
  GlobalOnly,
  // Pass-through with no parameters; for pipeline tests, cannot be trained.
  Identity,
};

GeneratorVariant parse_variant(std::string_view name);
std::string_view variant_name(GeneratorVariant v);

struct GeneratorConfig {
  std::size_t local_dim = 16;
  std::size_t global_embed_dim = 16;
  std::size_t global_out_dim = 16;
  std::size_t local_heads = 2;
  std::size_t global_heads = 4;
  std::size_t num_local_layers = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t fusion_channels = 32;
  GeneratorVariant variant = GeneratorVariant::Full;

  // ConfigError on any inconsistent field.
  void validate() const;
  bool uses_local() const { return variant == GeneratorVariant::Full || variant == GeneratorVariant::LocalOnly; }
  bool uses_global() const { return variant == GeneratorVariant::Full || variant == GeneratorVariant::GlobalOnly; }
  bool operator==(const GeneratorConfig&) const = default;
};

struct GeneratorWeights {
  std::optional<LocalBranchWeights> local;
  std::optional<GlobalBranchWeights> global;
  ConvParams fuse1, fuse2, head;
};

// Fan-in uniform weights, zero biases, N(0, 0.02^2) positional encoding.
GeneratorWeights init_weights(const GeneratorConfig& cfg, std::uint64_t seed);

// x[3,H,W] in [0,1] -> [3,H,W] in (0,1).
Tensor forward(const Tensor& x, const GeneratorConfig& cfg, const GeneratorWeights& w);

class Generator {
 public:
  Generator(GeneratorConfig cfg, GeneratorWeights weights);
  static Generator create(const GeneratorConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& x) const { return msatr::forward(x, config_, weights_); }
  Tensor operator()(const Tensor& x) const { return forward(x); }

  // Stable, name-ordered enumeration; the tensors alias the live weights.
  ParamList parameters() const;
  std::size_t parameter_count() const { return count_elements(parameters()); }

  const GeneratorConfig& config() const { return config_; }
  const GeneratorWeights& weights() const { return weights_; }

 private:
  GeneratorConfig config_;
  GeneratorWeights weights_;
};

// kind is "full", "local-only" or "global-only" (ConfigError otherwise).
// A single-branch variant feeds its lone branch into the fusion head.
Generator ablation_variant(std::string_view kind, GeneratorConfig cfg, std::uint64_t seed);

}  // namespace msatr
