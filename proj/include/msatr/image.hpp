#pragma once

// 8-bit RGB rasters, binary PPM (P6) files, and conversion to [3,H,W] tensors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msatr/tensor.hpp"

namespace msatr {

struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  // Row-major RGB triplets.
  std::vector<std::uint8_t> pixels;

  static ImageBuffer blank(std::size_t width, std::size_t height, std::uint8_t value = 0);
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const ImageBuffer&) const = default;
};

// Accepts maxval 1..255 (values are rescaled to 0..255) and '#' comments in
// the header. Throws IoError naming the path on any failure.
ImageBuffer read_ppm(const std::filesystem::path& path);
ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);
std::vector<std::uint8_t> encode_ppm(const ImageBuffer& image);

// v -> v/255, laid out [3,H,W].
Tensor to_tensor(const ImageBuffer& image);
// v -> floor(255 v + 0.5) clamped to [0,255]; NaN maps to 0.
ImageBuffer from_tensor(const Tensor& x);
std::uint8_t quantize(double v);

struct PaddedTensor {
  Tensor tensor;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;  // original size
  std::size_t width = 0;
};

// Mirror padding (edge pixel not repeated) up to the next multiple of
// `multiple`, split evenly with the extra row/column at the bottom/right.
PaddedTensor reflect_pad_to_multiple(const Tensor& x, std::size_t multiple);
// Cuts the original region back out of a padded result.
Tensor crop_back(const Tensor& padded, const PaddedTensor& layout);

// Regular files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir);

}  // namespace msatr
