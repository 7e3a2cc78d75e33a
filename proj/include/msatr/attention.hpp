#pragma once

// Multi-head self-attention, the pre-norm transformer block used for both
// window attention and the global token sequence, and the two branch
// assemblies of the generator.

#include <array>
#include <cstddef>
#include <vector>

#include "msatr/params.hpp"
#include "msatr/tensor.hpp"
#include "msatr/window_ops.hpp"

namespace msatr {

struct MhsaWeights {
  Tensor wq, wk, wv, wo;  // each [d,d]
  std::size_t num_heads = 1;

  std::size_t dim() const { return wq.size(0); }
  std::size_t head_dim() const { return dim() / num_heads; }
  // ConfigError unless all four matrices are d x d and num_heads divides d.
  void validate() const;
};

// LN -> MHSA -> residual -> LN -> MLP(d -> 4d -> d, GELU) -> residual
struct TransformerBlockWeights {
  NormParams norm1, norm2;
  MhsaWeights attn;
  LinearParams fc1, fc2;
};
using WindowBlockWeights = TransformerBlockWeights;

MhsaWeights init_mhsa(std::size_t dim, std::size_t heads, Rng& rng);
TransformerBlockWeights init_block(std::size_t dim, std::size_t heads, Rng& rng);
void collect(ParamList& out, const std::string& prefix, const MhsaWeights& w);
void collect(ParamList& out, const std::string& prefix, const TransformerBlockWeights& w);

// z[L,d] or z[B,L,d] (B independent sequences). Per head:
// softmax(Q_h K_h^T / sqrt(head_dim)) V_h; heads concatenated and projected
// by W_o. When `attention_probs` is given it receives [B*heads, L, L].
Tensor mhsa(const Tensor& z, const MhsaWeights& w, Tensor* attention_probs = nullptr);

// tokens[B,T,d] -> [B,T,d]
Tensor transformer_block(const Tensor& tokens, const TransformerBlockWeights& w);

// x[C,H,W]: attention inside each s x s window, no shift, no cross-window mixing.
Tensor window_attention_block(const Tensor& x, std::size_t s, const WindowBlockWeights& w);

struct LocalBranchWeights {
  ConvParams embed;  // 1x1, 3 -> C_l
  std::vector<WindowBlockWeights> layers;
};

// Window size of layer l (1-based) is 2^l.
std::vector<std::size_t> local_window_sizes(std::size_t num_layers);

// x[3,H,W] -> [C_l,H,W]: 1x1 embedding, then window blocks at 2, 4, 8, ...
// applied in sequence; the result is the running sum of every layer's output.
Tensor local_branch(const Tensor& x, const LocalBranchWeights& w);

struct GlobalBranchWeights {
  ConvParams patch;  // 8x8 stride 8, 3 -> d
  Tensor pos;        // [L,d]
  std::array<TransformerBlockWeights, 2> blocks;
  PatchRecoverWeights recover;
};

// x[3,H,W] -> [C_g,H,W]: patch tokens + positional encoding, two serial
// transformer blocks, then patch recovering back to full resolution.
Tensor global_branch(const Tensor& x, const GlobalBranchWeights& w);

}  // namespace msatr
