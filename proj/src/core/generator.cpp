#include "msatr/generator.hpp"

#include <cmath>

#include "msatr/errors.hpp"

namespace msatr {

GeneratorVariant parse_variant(std::string_view name) {
  if (name == "full") return GeneratorVariant::Full;
  if (name == "local-only") return GeneratorVariant::LocalOnly;
  if (name == "global-only") return GeneratorVariant::GlobalOnly;
  if (name == "identity") return GeneratorVariant::Identity;
  throw ConfigError("unknown generator variant '" + std::string(name) +
                    "' (expected full, local-only, global-only or identity)");
}

std::string_view variant_name(GeneratorVariant v) {
  switch (v) {
    case GeneratorVariant::Full: return "full";
    case GeneratorVariant::LocalOnly: return "local-only";
    case GeneratorVariant::GlobalOnly: return "global-only";
    case GeneratorVariant::Identity: return "identity";
  }
  return "unknown";
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("generator config: " + m); };
  if (height == 0 || width == 0 || height % kPatchSize != 0 || width % kPatchSize != 0) {
    fail("resolution " + std::to_string(height) + "x" + std::to_string(width) + " must be a positive multiple of 8");
  }
  if (variant == GeneratorVariant::Identity) return;
  if (uses_local()) {
    if (num_local_layers < 1) fail("num_local_layers must be >= 1");
    if (num_local_layers > 16) fail("num_local_layers is unreasonably large");
    const std::size_t largest = std::size_t{1} << num_local_layers;
    if (height % largest != 0 || width % largest != 0) {
      fail("largest window " + std::to_string(largest) + " does not divide " + std::to_string(height) + "x" +
           std::to_string(width));
    }
    if (local_dim == 0 || local_heads == 0 || local_dim % local_heads != 0) {
      fail("local_heads=" + std::to_string(local_heads) + " must divide local_dim=" + std::to_string(local_dim));
    }
  }
  if (uses_global()) {
    if (global_embed_dim == 0 || global_heads == 0 || global_embed_dim % global_heads != 0) {
      fail("global_heads=" + std::to_string(global_heads) + " must divide global_embed_dim=" +
           std::to_string(global_embed_dim));
    }
    if (global_out_dim == 0) fail("global_out_dim must be positive");
  }
  if (fusion_channels == 0) fail("fusion_channels must be positive");
}

GeneratorWeights init_weights(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GeneratorWeights w;
  if (cfg.variant == GeneratorVariant::Identity) return w;
  Rng rng(seed);
  std::size_t fused = 0;
  if (cfg.uses_local()) {
    LocalBranchWeights local;
    local.embed = init_conv(cfg.local_dim, 3, 1, 1, rng);
    for (std::size_t l = 0; l < cfg.num_local_layers; ++l) local.layers.push_back(init_block(cfg.local_dim, cfg.local_heads, rng));
    w.local = std::move(local);
    fused += cfg.local_dim;
  }
  if (cfg.uses_global()) {
    GlobalBranchWeights global;
    const std::size_t d = cfg.global_embed_dim;
    global.patch = init_conv(d, 3, kPatchSize, kPatchSize, rng);
    const std::size_t tokens = (cfg.height / kPatchSize) * (cfg.width / kPatchSize);
    global.pos = init_normal({tokens, d}, 0.02, rng);
    for (auto& block : global.blocks) block = init_block(d, cfg.global_heads, rng);
    global.recover.stages[0] = init_conv(cfg.global_out_dim, d, 3, 3, rng);
    global.recover.stages[1] = init_conv(cfg.global_out_dim, cfg.global_out_dim, 3, 3, rng);
    global.recover.stages[2] = init_conv(cfg.global_out_dim, cfg.global_out_dim, 3, 3, rng);
    w.global = std::move(global);
    fused += cfg.global_out_dim;
  }
  w.fuse1 = init_conv(cfg.fusion_channels, fused, 3, 3, rng);
  w.fuse2 = init_conv(cfg.fusion_channels, cfg.fusion_channels, 3, 3, rng);
  w.head = init_conv(3, cfg.fusion_channels, 1, 1, rng);
  return w;
}

Tensor forward(const Tensor& x, const GeneratorConfig& cfg, const GeneratorWeights& w) {
  if (x.ndim() != 3 || x.size(0) != 3 || x.size(1) != cfg.height || x.size(2) != cfg.width) {
    throw ConfigError("generator expects a 3x" + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                      " image, got " + shape_to_string(x.shape()));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw ContractError("generator input contains a non-finite value");
  }
  if (cfg.variant == GeneratorVariant::Identity) return x;

  std::vector<Tensor> branches;
  if (cfg.uses_local()) branches.push_back(local_branch(x, *w.local));
  if (cfg.uses_global()) branches.push_back(global_branch(x, *w.global));
  Tensor h = branches.size() == 1 ? branches.front() : concat(branches, 0);
  h = leaky_relu(conv2d(h, w.fuse1.weight, w.fuse1.bias, 1, 1), kLeakySlope);
  h = leaky_relu(conv2d(h, w.fuse2.weight, w.fuse2.bias, 1, 1), kLeakySlope);
  return sigmoid(conv2d(h, w.head.weight, w.head.bias, 1, 0));
}

Generator::Generator(GeneratorConfig cfg, GeneratorWeights weights)
    : config_(std::move(cfg)), weights_(std::move(weights)) {
  config_.validate();
}

Generator Generator::create(const GeneratorConfig& cfg, std::uint64_t seed) { return Generator(cfg, init_weights(cfg, seed)); }

ParamList Generator::parameters() const {
  ParamList out;
  if (weights_.local) {
    collect(out, "local.embed", weights_.local->embed);
    for (std::size_t l = 0; l < weights_.local->layers.size(); ++l) {
      collect(out, "local.layer" + std::to_string(l), weights_.local->layers[l]);
    }
  }
  if (weights_.global) {
    const auto& g = *weights_.global;
    collect(out, "global.patch", g.patch);
    out.push_back({"global.pos", g.pos});
    for (std::size_t b = 0; b < g.blocks.size(); ++b) collect(out, "global.block" + std::to_string(b), g.blocks[b]);
    for (std::size_t s = 0; s < g.recover.stages.size(); ++s) {
      collect(out, "global.recover" + std::to_string(s), g.recover.stages[s]);
    }
  }
  if (weights_.fuse1.weight.defined()) {
    collect(out, "fuse1", weights_.fuse1);
    collect(out, "fuse2", weights_.fuse2);
    collect(out, "head", weights_.head);
  }
  return out;
}

Generator ablation_variant(std::string_view kind, GeneratorConfig cfg, std::uint64_t seed) {
  const GeneratorVariant v = parse_variant(kind);
  if (v == GeneratorVariant::Identity) throw ConfigError("'identity' is not an ablation variant");
  cfg.variant = v;
  return Generator::create(cfg, seed);
}

}  // namespace msatr
