#include "msatr/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "msatr/errors.hpp"

namespace msatr {

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng, double lo, double hi) { return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

std::string numbered(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%02zu.ppm", i);
  return buf;
}

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

}  // namespace

ImageBuffer synth_scene(std::size_t width, std::size_t height, Rng& rng) {
  std::vector<double> px(width * height * 3);
  const Color top = random_color(rng, 0.35, 0.9);
  const Color bottom = random_color(rng, 0.35, 0.9);
  for (std::size_t y = 0; y < height; ++y) {
    const double t = static_cast<double>(y) / static_cast<double>(std::max<std::size_t>(1, height - 1));
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) px[(y * width + x) * 3 + c] = (1 - t) * top[c] + t * bottom[c];
    }
  }
  const std::size_t shapes = rng.uniform_int(3, 6);
  for (std::size_t s = 0; s < shapes; ++s) {
    const Color col = random_color(rng, 0.15, 0.95);
    const bool disc = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, static_cast<double>(width));
    const double cy = rng.uniform(0.0, static_cast<double>(height));
    const double rx = rng.uniform(0.08, 0.3) * static_cast<double>(width);
    const double ry = rng.uniform(0.08, 0.3) * static_cast<double>(height);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = (static_cast<double>(x) - cx) / rx;
        const double dy = (static_cast<double>(y) - cy) / ry;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) px[(y * width + x) * 3 + c] = col[c];
      }
    }
  }
  const double fx = rng.uniform(0.1, 0.5), fy = rng.uniform(0.1, 0.5);
  ImageBuffer img = ImageBuffer::blank(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double texture = 0.04 * std::sin(fx * static_cast<double>(x)) * std::cos(fy * static_cast<double>(y));
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(y, x, c) = quantize(std::clamp(px[(y * width + x) * 3 + c] + texture, 0.0, 1.0));
      }
    }
  }
  return img;
}

ImageBuffer synth_low_light(const ImageBuffer& scene, Rng& rng) {
  const std::size_t w = scene.width, h = scene.height;
  const double base = rng.uniform(0.06, 0.14);
  const std::size_t lights = rng.uniform_int(1, 2);
  struct Light {
    double x, y, r, gain;
  };
  std::vector<Light> ls;
  for (std::size_t i = 0; i < lights; ++i) {
    ls.push_back({rng.uniform(0.0, static_cast<double>(w)), rng.uniform(0.0, static_cast<double>(h)),
                  rng.uniform(0.15, 0.35) * static_cast<double>(std::max(w, h)), rng.uniform(0.3, 0.7)});
  }
  const double gamma = rng.uniform(1.1, 1.4);
  ImageBuffer out = ImageBuffer::blank(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double illum = base;
      for (const auto& l : ls) {
        const double dx = static_cast<double>(x) - l.x, dy = static_cast<double>(y) - l.y;
        illum += l.gain * std::exp(-(dx * dx + dy * dy) / (2.0 * l.r * l.r));
      }
      illum = std::min(illum, 0.9);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::pow(scene.at(y, x, c) / 255.0, gamma) * illum + 0.01 * rng.normal();
        out.at(y, x, c) = quantize(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, std::size_t size, std::uint64_t seed,
                             const SynthCounts& counts) {
  if (size < 8) throw ConfigError("synthetic image size must be at least 8");
  Rng rng(seed);
  for (const char* sub : {"low", "normal", "eval/low", "eval/ref"}) ensure_dir(root / sub);
  for (std::size_t i = 0; i < counts.train_low; ++i) {
    const ImageBuffer scene = synth_scene(size, size, rng);
    write_ppm(root / "low" / numbered(i), synth_low_light(scene, rng));
  }
  for (std::size_t i = 0; i < counts.train_normal; ++i) write_ppm(root / "normal" / numbered(i), synth_scene(size, size, rng));
  for (std::size_t i = 0; i < counts.eval_pairs; ++i) {
    const ImageBuffer scene = synth_scene(size, size, rng);
    write_ppm(root / "eval" / "ref" / numbered(i), scene);
    write_ppm(root / "eval" / "low" / numbered(i), synth_low_light(scene, rng));
  }
}

}  // namespace msatr
