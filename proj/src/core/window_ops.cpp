#include "msatr/window_ops.hpp"

#include "msatr/errors.hpp"

namespace msatr {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

WindowLayout WindowLayout::for_feature_map(std::size_t channels, std::size_t height, std::size_t width,
                                           std::size_t s) {
  if (!is_power_of_two(s) || height % s != 0 || width % s != 0) {
    throw PartitionError("window size " + std::to_string(s) + " does not evenly tile a " + std::to_string(height) +
                         "x" + std::to_string(width) + " feature map (H=" + std::to_string(height) +
                         ", W=" + std::to_string(width) + ")");
  }
  return {s, height / s, width / s, channels};
}

Tensor window_partition(const Tensor& x, std::size_t s) {
  if (x.ndim() != 3) throw DimensionError("window_partition: expected [C,H,W], got " + shape_to_string(x.shape()));
  const auto layout = WindowLayout::for_feature_map(x.size(0), x.size(1), x.size(2), s);
  const std::size_t c = layout.channels, nh = layout.num_windows_h, nw = layout.num_windows_w;
  return take(x, {nh * nw, s * s, c}, permutation_index({c, nh, s, nw, s}, {1, 3, 2, 4, 0}));
}

Tensor window_reverse(const Tensor& windows, std::size_t s, std::size_t height, std::size_t width) {
  if (windows.ndim() != 3) {
    throw DimensionError("window_reverse: expected [num_windows, s*s, C], got " + shape_to_string(windows.shape()));
  }
  const std::size_t c = windows.size(2);
  const auto layout = WindowLayout::for_feature_map(c, height, width, s);
  if (windows.size(0) != layout.num_windows() || windows.size(1) != s * s) {
    throw PartitionError("window_reverse: " + shape_to_string(windows.shape()) + " cannot tile a " +
                         std::to_string(height) + "x" + std::to_string(width) + " map with window " + std::to_string(s));
  }
  return take(windows, {c, height, width},
              permutation_index({layout.num_windows_h, layout.num_windows_w, s, s, c}, {4, 0, 2, 1, 3}));
}

Tensor patch_embed(const Tensor& x, const ConvParams& projection) {
  if (x.ndim() != 3 || x.size(1) % kPatchSize != 0 || x.size(2) % kPatchSize != 0) {
    throw DimensionError("patch_embed: input " + shape_to_string(x.shape()) + " is not divisible into 8x8 patches");
  }
  const auto& ws = projection.weight.shape();
  if (ws.size() != 4 || ws[2] != kPatchSize || ws[3] != kPatchSize) {
    throw DimensionError("patch_embed: projection must be an 8x8 kernel, got " + shape_to_string(ws));
  }
  Tensor grid = conv2d(x, projection.weight, projection.bias, kPatchSize, 0);
  const std::size_t d = grid.size(0), len = grid.size(1) * grid.size(2);
  return permute(reshape(grid, {d, len}), {1, 0});
}

Tensor add_positional_encoding(const Tensor& tokens, const Tensor& pos) {
  if (tokens.shape() != pos.shape()) {
    throw ConfigError("positional encoding " + shape_to_string(pos.shape()) + " does not match token sequence " +
                      shape_to_string(tokens.shape()) + "; input resolution differs from the configured one");
  }
  return add(tokens, pos);
}

Tensor patch_recover(const Tensor& tokens, const PatchRecoverWeights& w, std::size_t height, std::size_t width) {
  if (tokens.ndim() != 2) throw DimensionError("patch_recover: expected [L,d], got " + shape_to_string(tokens.shape()));
  if (height % kPatchSize != 0 || width % kPatchSize != 0) {
    throw ConfigError("patch_recover: target " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not a multiple of 8");
  }
  const std::size_t gh = height / kPatchSize, gw = width / kPatchSize;
  if (tokens.size(0) != gh * gw) {
    throw ConfigError("patch_recover: " + std::to_string(tokens.size(0)) + " tokens cannot form a " +
                      std::to_string(gh) + "x" + std::to_string(gw) + " grid for " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  const std::size_t d = tokens.size(1);
  Tensor t = reshape(permute(tokens, {1, 0}), {d, gh, gw});
  for (const auto& stage : w.stages) {
    t = upsample_nearest(t, 2);
    t = conv2d(t, stage.weight, stage.bias, 1, 1);
    t = leaky_relu(t, kLeakySlope);
  }
  return t;
}

}  // namespace msatr
