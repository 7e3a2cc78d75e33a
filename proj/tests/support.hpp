#pragma once

// Shared helpers and brute-force reference implementations for the tests.
// The references deliberately avoid the library's kernels.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "msatr/attention.hpp"
#include "msatr/config.hpp"
#include "msatr/image.hpp"
#include "msatr/rng.hpp"
#include "msatr/tensor.hpp"
#include "msatr/training.hpp"

namespace testsupport {

using msatr::Shape;
using msatr::Tensor;

inline Tensor random_tensor(const Shape& shape, msatr::Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(msatr::shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(v), requires_grad);
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(values(a), values(b)); }

// Triple loop, row-major [m,k] x [k,n].
inline std::vector<double> ref_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                      std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

// Direct cross-correlation with zero padding.
inline std::vector<double> ref_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                                      std::size_t pad) {
  const std::size_t ci = x.size(0), h = x.size(1), wd = x.size(2);
  const std::size_t co = w.size(0), kh = w.size(2), kw = w.size(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double acc = bias.defined() ? bias.at(o) : 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              acc += w.at(((o * ci + c) * kh + i) * kw + j) * x.at((c * h + iy) * wd + ix);
            }
        out[(o * oh + y) * ow + xx] = acc;
      }
  return out;
}

// Per-head loop over explicit Q/K/V slices, one sequence z[L,d].
inline std::vector<double> ref_mhsa(const Tensor& z, const msatr::MhsaWeights& w) {
  const std::size_t len = z.size(0), d = z.size(1), heads = w.num_heads, hd = d / heads;
  auto zv = values(z);
  auto q = ref_matmul(zv, values(w.wq), len, d, d);
  auto k = ref_matmul(zv, values(w.wk), len, d, d);
  auto v = ref_matmul(zv, values(w.wv), len, d, d);
  std::vector<double> concat(len * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> s(len);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < hd; ++e) dot += q[i * d + h * hd + e] * k[j * d + h * hd + e];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double norm = 0.0;
      for (double& x : s) norm += (x = std::exp(x - mx));
      for (std::size_t e = 0; e < hd; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += s[j] / norm * v[j * d + h * hd + e];
        concat[i * d + h * hd + e] = acc;
      }
    }
  }
  return ref_matmul(concat, values(w.wo), len, d, d);
}

// SSIM straight from the definition: every valid 11x11 window, 2-D Gaussian
// weights, two-pass moments.
inline double ref_ssim(const Tensor& a, const Tensor& b, std::size_t win = 11, double sigma = 1.5) {
  const double c1 = 1e-4, c2 = 9e-4;
  const std::size_t ch = a.size(0), h = a.size(1), w = a.size(2);
  std::vector<double> g(win);
  double gs = 0.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(win - 1) / 2.0;
    gs += (g[i] = std::exp(-t * t / (2.0 * sigma * sigma)));
  }
  double total = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + win <= h; ++y)
      for (std::size_t x = 0; x + win <= w; ++x) {
        auto A = [&](std::size_t i, std::size_t j) { return a.at((c * h + y + i) * w + x + j); };
        auto B = [&](std::size_t i, std::size_t j) { return b.at((c * h + y + i) * w + x + j); };
        auto W = [&](std::size_t i, std::size_t j) { return g[i] * g[j] / (gs * gs); };
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j) {
            ma += W(i, j) * A(i, j);
            mb += W(i, j) * B(i, j);
          }
        double va = 0, vb = 0, cv = 0;
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j) {
            va += W(i, j) * (A(i, j) - ma) * (A(i, j) - ma);
            vb += W(i, j) * (B(i, j) - mb) * (B(i, j) - mb);
            cv += W(i, j) * (A(i, j) - ma) * (B(i, j) - mb);
          }
        acc += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += acc / static_cast<double>(count);
  }
  return total / static_cast<double>(ch);
}

// Scalar Adam on one value.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long long t = 0;
  double step(double param, double grad, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    return param - lr * mh / (std::sqrt(vh) + eps);
  }
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("msatr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Small networks and a procedural dataset that train in milliseconds.
inline msatr::GeneratorConfig tiny_generator(std::size_t side = 32) {
  msatr::GeneratorConfig g;
  g.local_dim = 4;
  g.local_heads = 2;
  g.global_embed_dim = 8;
  g.global_heads = 2;
  g.global_out_dim = 4;
  g.fusion_channels = 4;
  g.num_local_layers = 2;
  g.height = g.width = side;
  return g;
}

inline msatr::Dataset tiny_dataset(std::size_t side, std::uint64_t seed, std::size_t n = 3) {
  msatr::Rng rng(seed);
  msatr::Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.low.add("low" + std::to_string(i), random_tensor({3, side + 8, side + 8}, rng, 0.0, 0.3));
    d.normal.add("normal" + std::to_string(i), random_tensor({3, side + 8, side + 8}, rng, 0.3, 1.0));
  }
  return d;
}

inline msatr::TrainConfig tiny_train(std::size_t side = 32, std::size_t steps = 4) {
  msatr::TrainConfig t;
  t.crop_size = side;
  t.batch_size = 1;
  t.total_steps = steps;
  t.seed = 11;
  t.lr_init = 1e-3;
  return t;
}

}  // namespace testsupport
