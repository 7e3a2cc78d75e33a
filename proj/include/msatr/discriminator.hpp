#pragma once

// Whole-image and random-patch discriminators. Both share one architecture:
// three stride-2 3x3 convolutions (3 -> 16 -> 32 -> 64) with leaky_relu(0.2),
// flattened into a linear layer producing a single logit. Outputs are logits;
// losses apply a stable log-sigmoid.

#include <array>
#include <cstdint>
#include <vector>

#include "msatr/params.hpp"
#include "msatr/rng.hpp"

namespace msatr {

struct DiscriminatorWeights {
  std::array<ConvParams, 3> convs;
  LinearParams head;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
};

class Discriminator {
 public:
  // Sized for inputs of exactly input_height x input_width.
  static Discriminator create(std::size_t input_height, std::size_t input_width, std::uint64_t seed);

  // x[3,H,W] -> logit[1]
  Tensor logit(const Tensor& x) const;
  ParamList parameters() const;

  std::size_t input_height() const { return w_.input_height; }
  std::size_t input_width() const { return w_.input_width; }

 private:
  explicit Discriminator(DiscriminatorWeights w) : w_(std::move(w)) {}
  DiscriminatorWeights w_;
};

inline constexpr std::size_t kDefaultLocalPatches = 4;

// Scores the whole image.
Tensor discriminate_global(const Discriminator& d, const Tensor& x);

struct PatchScore {
  std::size_t top = 0;
  std::size_t left = 0;
  Tensor patch;
  Tensor logit;
};

// Offsets drawn uniformly over [0, H-patch] x [0, W-patch]; row drawn first.
std::vector<std::pair<std::size_t, std::size_t>> sample_patch_offsets(std::size_t height, std::size_t width,
                                                                      std::size_t patch, std::size_t count, Rng& rng);

// Crops `count` random square patches (side = discriminator input size) and
// scores each.
std::vector<PatchScore> discriminate_local(const Discriminator& d, const Tensor& x, Rng& rng,
                                           std::size_t count = kDefaultLocalPatches);

// Scores patches cut at the given (top, left) offsets.
std::vector<PatchScore> discriminate_patches(const Discriminator& d, const Tensor& x,
                                             const std::vector<std::pair<std::size_t, std::size_t>>& offsets);

}  // namespace msatr
