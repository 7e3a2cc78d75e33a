#pragma once

// Tensor-layout machinery for the two attention branches: non-overlapping
// window partitioning for the local branch and 8x8 patch tokens for the
// global branch.
//
// Windows are numbered row-major over the window grid, and pixels inside a
// window are flattened row-major, so window k covers the block whose top-left
// corner is ((k / num_windows_w) * s, (k % num_windows_w) * s).

#include <array>
#include <cstddef>

#include "msatr/params.hpp"
#include "msatr/tensor.hpp"

namespace msatr {

inline constexpr std::size_t kPatchSize = 8;
inline constexpr double kLeakySlope = 0.2;

struct WindowLayout {
  std::size_t window_size = 0;
  std::size_t num_windows_h = 0;
  std::size_t num_windows_w = 0;
  std::size_t channels = 0;

  // Throws PartitionError unless s is a power of two dividing H and W.
  static WindowLayout for_feature_map(std::size_t channels, std::size_t height, std::size_t width, std::size_t s);
  std::size_t num_windows() const { return num_windows_h * num_windows_w; }
  std::size_t tokens_per_window() const { return window_size * window_size; }
};

// x[C,H,W] -> [num_windows, s*s, C]
Tensor window_partition(const Tensor& x, std::size_t s);
// windows[num_windows, s*s, C] -> [C,H,W]
Tensor window_reverse(const Tensor& windows, std::size_t s, std::size_t height, std::size_t width);

// x[3,H,W] -> tokens[(H/8)*(W/8), d] through an 8x8 stride-8 convolution.
Tensor patch_embed(const Tensor& x, const ConvParams& projection);
// Elementwise z + pos; a length mismatch means the input resolution differs
// from the one the encoding was sized for (ConfigError).
Tensor add_positional_encoding(const Tensor& tokens, const Tensor& pos);

// Three stages of (nearest x2 upsample, 3x3 conv, leaky_relu 0.2).
struct PatchRecoverWeights {
  std::array<ConvParams, 3> stages;
};

// tokens[L,d] -> [C,H,W] with L = (H/8)*(W/8).
Tensor patch_recover(const Tensor& tokens, const PatchRecoverWeights& w, std::size_t height, std::size_t width);

}  // namespace msatr
