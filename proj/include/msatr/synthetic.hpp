#pragma once

// Procedural scenes for desk-scale training: unpaired dark/bright sets and
// paired low/reference evaluation images.

#include <cstdint>
#include <filesystem>

#include "msatr/image.hpp"
#include "msatr/rng.hpp"

namespace msatr {

// Gradient background plus rectangles and discs, well exposed.
ImageBuffer synth_scene(std::size_t width, std::size_t height, Rng& rng);
// Darkens a scene under a non-uniform illumination field with sensor noise.
ImageBuffer synth_low_light(const ImageBuffer& scene, Rng& rng);

struct SynthCounts {
  std::size_t train_low = 8;
  std::size_t train_normal = 8;
  std::size_t eval_pairs = 4;
};

// Writes <root>/low, <root>/normal, <root>/eval/low, <root>/eval/ref as PPM
// files named img_NN.ppm.
void write_synthetic_dataset(const std::filesystem::path& root, std::size_t size, std::uint64_t seed,
                             const SynthCounts& counts = {});

}  // namespace msatr
