#include "msatr/attention.hpp"

#include <cmath>

#include "msatr/errors.hpp"

namespace msatr {

void MhsaWeights::validate() const {
  if (!wq.defined() || wq.ndim() != 2) throw ConfigError("mhsa: W_q must be a d x d matrix");
  const std::size_t d = wq.size(0);
  for (const Tensor* m : {&wq, &wk, &wv, &wo}) {
    if (!m->defined() || m->shape() != Shape{d, d}) {
      throw ConfigError("mhsa: projection matrices must all be " + std::to_string(d) + "x" + std::to_string(d));
    }
  }
  if (num_heads == 0 || d % num_heads != 0) {
    throw ConfigError("mhsa: " + std::to_string(num_heads) + " heads do not divide dimension " + std::to_string(d));
  }
}

MhsaWeights init_mhsa(std::size_t dim, std::size_t heads, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  MhsaWeights w;
  w.wq = init_uniform({dim, dim}, bound, rng);
  w.wk = init_uniform({dim, dim}, bound, rng);
  w.wv = init_uniform({dim, dim}, bound, rng);
  w.wo = init_uniform({dim, dim}, bound, rng);
  w.num_heads = heads;
  w.validate();
  return w;
}

TransformerBlockWeights init_block(std::size_t dim, std::size_t heads, Rng& rng) {
  TransformerBlockWeights w;
  w.norm1 = init_norm(dim);
  w.attn = init_mhsa(dim, heads, rng);
  w.norm2 = init_norm(dim);
  w.fc1 = init_linear(dim, 4 * dim, rng);
  w.fc2 = init_linear(4 * dim, dim, rng);
  return w;
}

void collect(ParamList& out, const std::string& prefix, const MhsaWeights& w) {
  out.push_back({prefix + ".wq", w.wq});
  out.push_back({prefix + ".wk", w.wk});
  out.push_back({prefix + ".wv", w.wv});
  out.push_back({prefix + ".wo", w.wo});
}

void collect(ParamList& out, const std::string& prefix, const TransformerBlockWeights& w) {
  collect(out, prefix + ".norm1", w.norm1);
  collect(out, prefix + ".attn", w.attn);
  collect(out, prefix + ".norm2", w.norm2);
  collect(out, prefix + ".fc1", w.fc1);
  collect(out, prefix + ".fc2", w.fc2);
}

Tensor mhsa(const Tensor& z, const MhsaWeights& w, Tensor* attention_probs) {
  w.validate();
  const bool batched = z.ndim() == 3;
  if (!batched && z.ndim() != 2) throw ConfigError("mhsa: expected [L,d] or [B,L,d], got " + shape_to_string(z.shape()));
  const std::size_t b = batched ? z.size(0) : 1;
  const std::size_t len = z.size(batched ? 1 : 0);
  const std::size_t d = z.shape().back();
  if (d != w.dim()) {
    throw ConfigError("mhsa: token width " + std::to_string(d) + " does not match weights of width " +
                      std::to_string(w.dim()));
  }
  const std::size_t heads = w.num_heads, hd = w.head_dim();
  const Tensor flat = reshape(z, {b * len, d});

  // [B*L, d] -> [B*heads, L, hd]
  const IndexMap split = permutation_index({b, len, heads, hd}, {0, 2, 1, 3});
  auto split_heads = [&](const Tensor& t) { return take(t, {b * heads, len, hd}, split); };
  const Tensor q = split_heads(matmul(flat, w.wq));
  const Tensor k = split_heads(matmul(flat, w.wk));
  const Tensor v = split_heads(matmul(flat, w.wv));

  const Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(hd)));
  const Tensor probs = softmax(scores, 2);
  if (attention_probs) *attention_probs = probs;
  const Tensor ctx = bmm(probs, v);
  const Tensor merged = take(ctx, {b * len, d}, permutation_index({b, heads, len, hd}, {0, 2, 1, 3}));
  const Tensor out = matmul(merged, w.wo);
  return reshape(out, z.shape());
}

Tensor transformer_block(const Tensor& tokens, const TransformerBlockWeights& w) {
  if (tokens.ndim() != 3) {
    throw DimensionError("transformer_block: expected [B,T,d], got " + shape_to_string(tokens.shape()));
  }
  const std::size_t b = tokens.size(0), t = tokens.size(1), d = tokens.size(2);
  Tensor x = add(tokens, mhsa(layer_norm(tokens, w.norm1.gamma, w.norm1.beta), w.attn));
  Tensor h = reshape(layer_norm(x, w.norm2.gamma, w.norm2.beta), {b * t, d});
  h = linear(gelu(linear(h, w.fc1.weight, w.fc1.bias)), w.fc2.weight, w.fc2.bias);
  return add(x, reshape(h, {b, t, d}));
}

Tensor window_attention_block(const Tensor& x, std::size_t s, const WindowBlockWeights& w) {
  if (x.ndim() != 3) throw DimensionError("window_attention_block: expected [C,H,W], got " + shape_to_string(x.shape()));
  const Tensor windows = window_partition(x, s);
  return window_reverse(transformer_block(windows, w), s, x.size(1), x.size(2));
}

std::vector<std::size_t> local_window_sizes(std::size_t num_layers) {
  std::vector<std::size_t> sizes;
  for (std::size_t l = 1; l <= num_layers; ++l) sizes.push_back(std::size_t{1} << l);
  return sizes;
}

Tensor local_branch(const Tensor& x, const LocalBranchWeights& w) {
  if (w.layers.empty()) throw ConfigError("local_branch: at least one window layer is required");
  Tensor features = conv2d(x, w.embed.weight, w.embed.bias, 1, 0);
  const auto sizes = local_window_sizes(w.layers.size());
  Tensor accumulated;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    features = window_attention_block(features, sizes[l], w.layers[l]);
    accumulated = accumulated.defined() ? add(accumulated, features) : features;
  }
  return accumulated;
}

Tensor global_branch(const Tensor& x, const GlobalBranchWeights& w) {
  if (x.ndim() != 3) throw DimensionError("global_branch: expected [3,H,W], got " + shape_to_string(x.shape()));
  Tensor tokens = add_positional_encoding(patch_embed(x, w.patch), w.pos);
  const std::size_t len = tokens.size(0), d = tokens.size(1);
  tokens = reshape(tokens, {1, len, d});
  for (const auto& block : w.blocks) tokens = transformer_block(tokens, block);
  return patch_recover(reshape(tokens, {len, d}), w.recover, x.size(1), x.size(2));
}

}  // namespace msatr
