#include "msatr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "msatr/errors.hpp"

namespace msatr {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) fail(std::string(what) + " is too large");
    }
    if (digits == 0) fail(std::string("missing ") + what);
    return v;
  }

  [[noreturn]] void fail(const std::string& m) const { throw IoError(source_ + ": not a valid PPM (P6) file: " + m); }

  std::size_t pos_ = 0;

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& source_;
};

}  // namespace

ImageBuffer ImageBuffer::blank(std::size_t width, std::size_t height, std::uint8_t value) {
  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.pixels.assign(width * height * 3, value);
  return img;
}

ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  HeaderReader r(bytes, source);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') r.fail("bad magic");
  r.pos_ = 2;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) r.fail("zero dimension");
  if (maxval == 0 || maxval > 255) r.fail("maxval " + std::to_string(maxval) + " unsupported");
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) r.fail("missing separator before pixel data");
  ++r.pos_;
  const std::size_t n = width * height * 3;
  if (bytes.size() - r.pos_ < n) r.fail("truncated pixel data");
  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<long>(r.pos_), bytes.begin() + static_cast<long>(r.pos_ + n));
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      if (p > maxval) r.fail("sample exceeds maxval");
      p = static_cast<std::uint8_t>((p * 255u * 2 + maxval) / (2 * maxval));
    }
  }
  return img;
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes, path.string());
}

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& image) {
  if (image.pixels.size() != image.width * image.height * 3) {
    throw ContractError("image buffer holds " + std::to_string(image.pixels.size()) + " bytes for " +
                        std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor to_tensor(const ImageBuffer& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> data(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) data[(c * h + y) * w + x] = image.at(y, x, c) / 255.0;
    }
  }
  return Tensor::from_data({3, h, w}, std::move(data));
}

std::uint8_t quantize(double v) {
  if (std::isnan(v)) return 0;
  const double q = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

ImageBuffer from_tensor(const Tensor& x) {
  if (x.ndim() != 3 || x.size(0) != 3) throw DimensionError("from_tensor: expected [3,H,W], got " + shape_to_string(x.shape()));
  const std::size_t h = x.size(1), w = x.size(2);
  ImageBuffer img = ImageBuffer::blank(w, h);
  auto d = x.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      for (std::size_t c = 0; c < 3; ++c) img.at(y, xx, c) = quantize(d[(c * h + y) * w + xx]);
    }
  }
  return img;
}

PaddedTensor reflect_pad_to_multiple(const Tensor& x, std::size_t multiple) {
  if (x.ndim() != 3) throw DimensionError("reflect_pad: expected [C,H,W], got " + shape_to_string(x.shape()));
  if (multiple == 0) throw ContractError("reflect_pad: multiple must be positive");
  const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
  const std::size_t ph = (multiple - h % multiple) % multiple;
  const std::size_t pw = (multiple - w % multiple) % multiple;
  PaddedTensor out;
  out.top = ph / 2;
  out.left = pw / 2;
  out.height = h;
  out.width = w;
  if (ph == 0 && pw == 0) {
    out.tensor = x;
    return out;
  }
  if (ph - out.top >= h || pw - out.left >= w) {
    throw ContractError("reflect_pad: " + shape_to_string(x.shape()) + " is too small to mirror-pad to a multiple of " +
                        std::to_string(multiple));
  }
  auto mirror = [](long i, long n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  const std::size_t oh = h + ph, ow = w + pw;
  auto src = x.data();
  std::vector<double> data(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const auto sy = static_cast<std::size_t>(mirror(static_cast<long>(y) - static_cast<long>(out.top), static_cast<long>(h)));
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const auto sx =
            static_cast<std::size_t>(mirror(static_cast<long>(xx) - static_cast<long>(out.left), static_cast<long>(w)));
        data[(ch * oh + y) * ow + xx] = src[(ch * h + sy) * w + sx];
      }
    }
  }
  out.tensor = Tensor::from_data({c, oh, ow}, std::move(data));
  return out;
}

Tensor crop_back(const Tensor& padded, const PaddedTensor& layout) {
  if (padded.ndim() == 3 && padded.size(1) == layout.height && padded.size(2) == layout.width) return padded;
  NoGradGuard guard;
  return crop(padded, layout.top, layout.left, layout.height, layout.width).detach();
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) out.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace msatr
