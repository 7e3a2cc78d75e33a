#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "msatr/errors.hpp"
#include "msatr/tensor.hpp"

namespace msatr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(std::span<double> s, std::size_t rows, std::size_t cols) {
  return MapMat(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
CMapMat as_mat(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return CMapMat(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Gradient sink for an input, or an empty span when it needs none.
std::span<double> sink(Tensor t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.grad_buffer();
}

void require_ndim(const Tensor& t, std::size_t n, const char* op) {
  if (t.ndim() != n) {
    throw DimensionError(std::string(op) + ": expected a " + std::to_string(n) + "-d tensor, got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  Buffer out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return Tensor::make_op(name, x.shape(), std::move(out), {x},
                         [x, deriv](std::span<const double> g, std::span<const double> y) {
                           auto dx = sink(x);
                           auto xv = x.data();
                           for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * deriv(xv[i], y[i]);
                         });
}

// Patches of a [C,H,W] image laid out as rows (c,ky,kx) and columns (oy,ox).
void im2col(std::span<const double> src, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
            std::span<double> cols) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols.data() + ((c * kh + ky) * kw + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          double* dst = row + oy * out_w;
          if (iy < 0 || iy >= static_cast<long>(height)) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src_row = src.data() + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(width)) ? 0.0 : src_row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
void col2im(std::span<const double> cols, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
            std::span<double> dst) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols.data() + ((c * kh + ky) * kw + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(height)) continue;
          double* dst_row = dst.data() + (c * height + static_cast<std::size_t>(iy)) * width;
          const double* src = row + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(width)) dst_row[ix] += src[ox];
          }
        }
      }
    }
  }
}

constexpr std::size_t kSmallGemm = 4096;

// c[r,c] (+)= sum_j a[r,j] * b[j,c] over rows x cols with inner length `inner`;
// each operand is addressed through a (row stride, column stride) pair.
void small_gemm(const double* a, std::size_t ars, std::size_t acs, const double* b, std::size_t brs, std::size_t bcs,
                double* c, std::size_t crs, std::size_t ccs, std::size_t rows, std::size_t cols, std::size_t inner,
                bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t col = 0; col < cols; ++col) {
      double acc = 0.0;
      for (std::size_t j = 0; j < inner; ++j) acc += a[r * ars + j * acs] * b[j * brs + col * bcs];
      double& dst = c[r * crs + col * ccs];
      dst = accumulate ? dst + acc : acc;
    }
  }
}

bool is_pointwise_kernel(std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  return kh == 1 && kw == 1 && stride == 1 && pad == 0;
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_ndim(a, 2, "matmul");
  require_ndim(b, 2, "matmul");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Buffer out(m * n);
  as_mat(std::span<double>(out), m, n).noalias() = as_mat(a.data(), m, k) * as_mat(b.data(), k, n);
  return Tensor::make_op("matmul", {m, n}, std::move(out), {a, b},
                         [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
                           auto gm = as_mat(g, m, n);
                           if (auto da = sink(a); !da.empty()) as_mat(da, m, k).noalias() += gm * as_mat(b.data(), k, n).transpose();
                           if (auto db = sink(b); !db.empty()) as_mat(db, k, n).noalias() += as_mat(a.data(), m, k).transpose() * gm;
                         });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_ndim(a, 3, "bmm");
  require_ndim(b, 3, "bmm");
  const std::size_t batch = a.size(0), m = a.size(1), k = a.size(2);
  const std::size_t n = transpose_b ? b.size(1) : b.size(2);
  const std::size_t bk = transpose_b ? b.size(2) : b.size(1);
  if (b.size(0) != batch || bk != k) {
    throw DimensionError("bmm: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + (transpose_b ? " (transposed)" : ""));
  }
  Buffer out(batch * m * n);
  auto av = a.data();
  auto bv = b.data();
  if (m * n * k <= kSmallGemm) {
    for (std::size_t i = 0; i < batch; ++i) {
      small_gemm(av.data() + i * m * k, k, 1, bv.data() + i * n * k, transpose_b ? 1 : n, transpose_b ? k : 1,
                 out.data() + i * m * n, n, 1, m, n, k, false);
    }
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      auto am = as_mat(av.subspan(i * m * k, m * k), m, k);
      auto om = as_mat(std::span<double>(out).subspan(i * m * n, m * n), m, n);
      if (transpose_b) {
        om.noalias() = am * as_mat(bv.subspan(i * n * k, n * k), n, k).transpose();
      } else {
        om.noalias() = am * as_mat(bv.subspan(i * k * n, k * n), k, n);
      }
    }
  }
  return Tensor::make_op(
      "bmm", {batch, m, n}, std::move(out), {a, b},
      [a, b, batch, m, k, n, transpose_b](std::span<const double> g, std::span<const double>) {
        auto da = sink(a);
        auto db = sink(b);
        auto av = a.data();
        auto bv = b.data();
        if (m * n * k <= kSmallGemm) {
          // C[r,c] += sum_j A[r,j] B[j,c] with explicit strides (row stride, col stride).
          for (std::size_t i = 0; i < batch; ++i) {
            const double* gi = g.data() + i * m * n;
            const double* ai = av.data() + i * m * k;
            const double* bi = bv.data() + i * n * k;
            if (!da.empty()) {
              double* dai = da.data() + i * m * k;
              // dA = G * B^T (b stored [k,n]) or G * B (b stored [n,k])
              if (transpose_b) small_gemm(gi, n, 1, bi, k, 1, dai, k, 1, m, k, n, true);
              else small_gemm(gi, n, 1, bi, 1, n, dai, k, 1, m, k, n, true);
            }
            if (!db.empty()) {
              double* dbi = db.data() + i * n * k;
              // dB = G^T * A ([n,k]) or A^T * G ([k,n])
              if (transpose_b) small_gemm(gi, 1, n, ai, k, 1, dbi, k, 1, n, k, m, true);
              else small_gemm(ai, 1, k, gi, n, 1, dbi, n, 1, k, n, m, true);
            }
          }
          return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
          auto gm = as_mat(g.subspan(i * m * n, m * n), m, n);
          auto am = as_mat(av.subspan(i * m * k, m * k), m, k);
          if (transpose_b) {
            auto bm = as_mat(bv.subspan(i * n * k, n * k), n, k);
            if (!da.empty()) as_mat(da.subspan(i * m * k, m * k), m, k).noalias() += gm * bm;
            if (!db.empty()) as_mat(db.subspan(i * n * k, n * k), n, k).noalias() += gm.transpose() * am;
          } else {
            auto bm = as_mat(bv.subspan(i * k * n, k * n), k, n);
            if (!da.empty()) as_mat(da.subspan(i * m * k, m * k), m, k).noalias() += gm * bm.transpose();
            if (!db.empty()) as_mat(db.subspan(i * k * n, k * n), k, n).noalias() += am.transpose() * gm;
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_ndim(x, 2, "linear");
  require_ndim(w, 2, "linear");
  const std::size_t rows = x.size(0), in = x.size(1), out_dim = w.size(1);
  if (w.size(0) != in) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " does not match weight " +
                         shape_to_string(w.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                         std::to_string(out_dim));
  }
  Buffer out(rows * out_dim);
  auto om = as_mat(std::span<double>(out), rows, out_dim);
  om.noalias() = as_mat(x.data(), rows, in) * as_mat(w.data(), in, out_dim);
  if (bias.defined()) om.rowwise() += as_mat(bias.data(), 1, out_dim).row(0);
  return Tensor::make_op("linear", {rows, out_dim}, std::move(out), {x, w, bias},
                         [x, w, bias, rows, in, out_dim](std::span<const double> g, std::span<const double>) {
                           auto gm = as_mat(g, rows, out_dim);
                           if (auto dx = sink(x); !dx.empty()) as_mat(dx, rows, in).noalias() += gm * as_mat(w.data(), in, out_dim).transpose();
                           if (auto dw = sink(w); !dw.empty()) as_mat(dw, in, out_dim).noalias() += as_mat(x.data(), rows, in).transpose() * gm;
                           if (auto db = sink(bias); !db.empty()) as_mat(db, 1, out_dim) += gm.colwise().sum();
                         });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
  require_ndim(x, 3, "conv2d");
  require_ndim(w, 4, "conv2d");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t cin = x.size(0), h = x.size(1), wd = x.size(2);
  const std::size_t cout = w.size(0), kh = w.size(2), kw = w.size(3);
  if (w.size(1) != cin) {
    throw DimensionError("conv2d: input " + shape_to_string(x.shape()) + " has " + std::to_string(cin) +
                         " channels but weight " + shape_to_string(w.shape()) + " expects " + std::to_string(w.size(1)));
  }
  if (kh > h + 2 * pad || kw > wd + 2 * pad) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * pad) + "x" + std::to_string(wd + 2 * pad));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias.shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
  }
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t kdim = cin * kh * kw, plane = oh * ow;

  const bool pointwise = is_pointwise_kernel(kh, kw, stride, pad);
  Buffer cols;
  if (!pointwise) {
    cols.resize(kdim * plane);
    im2col(x.data(), cin, h, wd, kh, kw, stride, pad, oh, ow, cols);
  }
  auto cols_view = [&x, &cols, pointwise]() -> std::span<const double> {
    return pointwise ? x.data() : std::span<const double>(cols);
  };

  Buffer out(cout * plane);
  auto om = as_mat(std::span<double>(out), cout, plane);
  om.noalias() = as_mat(w.data(), cout, kdim) * as_mat(cols_view(), kdim, plane);
  if (bias.defined()) om.colwise() += as_mat(bias.data(), cout, 1).col(0);

  return Tensor::make_op(
      "conv2d", {cout, oh, ow}, std::move(out), {x, w, bias},
      [x, w, bias, cols = std::move(cols), pointwise, cin, h, wd, cout, kh, kw, stride, pad, oh, ow, kdim, plane](
          std::span<const double> g, std::span<const double>) {
        auto gm = as_mat(g, cout, plane);
        std::span<const double> cv = pointwise ? x.data() : std::span<const double>(cols);
        if (auto dw = sink(w); !dw.empty()) as_mat(dw, cout, kdim).noalias() += gm * as_mat(cv, kdim, plane).transpose();
        if (auto db = sink(bias); !db.empty()) as_mat(db, cout, 1) += gm.rowwise().sum();
        if (auto dx = sink(x); !dx.empty()) {
          if (pointwise) {
            as_mat(dx, kdim, plane).noalias() += as_mat(w.data(), cout, kdim).transpose() * gm;
          } else {
            Buffer dcols(kdim * plane);
            as_mat(std::span<double>(dcols), kdim, plane).noalias() = as_mat(w.data(), cout, kdim).transpose() * gm;
            col2im(dcols, cin, h, wd, kh, kw, stride, pad, oh, ow, dx);
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  require_ndim(x, 3, "conv_transpose2d");
  require_ndim(w, 4, "conv_transpose2d");
  if (stride < 1) throw DimensionError("conv_transpose2d: stride must be >= 1");
  const std::size_t cin = x.size(0), h = x.size(1), wd = x.size(2);
  const std::size_t cout = w.size(1), kh = w.size(2), kw = w.size(3);
  if (w.size(0) != cin) {
    throw DimensionError("conv_transpose2d: input " + shape_to_string(x.shape()) + " does not match weight " +
                         shape_to_string(w.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv_transpose2d: bias " + shape_to_string(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t oh = (h - 1) * stride + kh;
  const std::size_t ow = (wd - 1) * stride + kw;
  const std::size_t kdim = cout * kh * kw, plane = h * wd;

  // The forward pass is the adjoint of conv2d(out -> x).
  Buffer cols(kdim * plane);
  as_mat(std::span<double>(cols), kdim, plane).noalias() =
      as_mat(w.data(), cin, kdim).transpose() * as_mat(x.data(), cin, plane);
  Buffer out(cout * oh * ow, 0.0);
  col2im(cols, cout, oh, ow, kh, kw, stride, 0, h, wd, out);
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t c = 0; c < cout; ++c) {
      for (std::size_t i = 0; i < oh * ow; ++i) out[c * oh * ow + i] += bv[c];
    }
  }
  return Tensor::make_op(
      "conv_transpose2d", {cout, oh, ow}, std::move(out), {x, w, bias},
      [x, w, bias, cin, cout, kh, kw, stride, oh, ow, h, wd, kdim, plane](std::span<const double> g,
                                                                         std::span<const double>) {
        Buffer gcols(kdim * plane);
        im2col(g, cout, oh, ow, kh, kw, stride, 0, h, wd, gcols);
        auto gc = as_mat(std::span<const double>(gcols), kdim, plane);
        if (auto dx = sink(x); !dx.empty()) as_mat(dx, cin, plane).noalias() += as_mat(w.data(), cin, kdim) * gc;
        if (auto dw = sink(w); !dw.empty()) as_mat(dw, cin, kdim).noalias() += as_mat(x.data(), cin, plane) * gc.transpose();
        if (auto db = sink(bias); !db.empty()) {
          for (std::size_t c = 0; c < cout; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < oh * ow; ++i) s += g[c * oh * ow + i];
            db[c] += s;
          }
        }
      });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double> g, std::span<const double>) {
                           for (auto d : {sink(a), sink(b)}) {
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.data(), bv = b.data();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_op("sub", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double> g, std::span<const double>) {
                           auto da = sink(a);
                           for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
                           auto db = sink(b);
                           for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double> g, std::span<const double>) {
                           auto da = sink(a);
                           auto bv = b.data();
                           for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
                           auto db = sink(b);
                           auto av = a.data();
                           for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
                         });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary("add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive entry " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v >= 0.0)) throw DomainError("sqrt: negative entry " + std::to_string(v));
  }
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  auto in = x.data();
  Buffer out(in.size());
  auto deriv = std::make_shared<Buffer>(x.requires_grad() && grad_enabled() ? in.size() : 0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    const double t = std::tanh(k * (v + c * v * v * v));
    out[i] = 0.5 * v * (1.0 + t);
    if (!deriv->empty()) (*deriv)[i] = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
  }
  return Tensor::make_op("gelu", x.shape(), std::move(out), {x},
                         [x, deriv](std::span<const double> g, std::span<const double>) {
                           auto dx = sink(x);
                           for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * (*deriv)[i];
                         });
}

// ---- normalization --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t len = s[axis];
  const std::size_t inner = std::accumulate(s.begin() + static_cast<long>(axis) + 1, s.end(), std::size_t{1},
                                            std::multiplies<>());
  const std::size_t outer = x.numel() / (len * inner);
  auto in = x.data();
  Buffer out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * len * inner + j;
      double mx = in[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  return Tensor::make_op("softmax", s, std::move(out), {x},
                         [x, outer, len, inner](std::span<const double> g, std::span<const double> y) {
                           auto dx = sink(x);
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t j = 0; j < inner; ++j) {
                               const std::size_t base = o * len * inner + j;
                               double dot = 0.0;
                               for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
                               for (std::size_t i = 0; i < len; ++i) {
                                 const std::size_t k = base + i * inner;
                                 dx[k] += y[k] * (g[k] - dot);
                               }
                             }
                           }
                         });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " do not match normalized length " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  auto in = x.data(), gv = gamma.data(), bv = beta.data();
  Buffer out(in.size());
  Buffer xhat(in.size());
  Buffer rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (row[i] - mu) * rstd[r];
      xhat[r * d + i] = xh;
      out[r * d + i] = xh * gv[i] + bv[i];
    }
  }
  return Tensor::make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](std::span<const double> g,
                                                                               std::span<const double>) {
        auto dx = sink(x);
        auto dg = sink(gamma);
        auto db = sink(beta);
        auto gv = gamma.data();
        Buffer dxh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* xh = xhat.data() + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            if (!dg.empty()) dg[i] += gr[i] * xh[i];
            if (!db.empty()) db[i] += gr[i];
          }
          if (dx.empty()) continue;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            dxh[i] = gr[i] * gv[i];
            m1 += dxh[i];
            m2 += dxh[i] * xh[i];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) dx[r * d + i] += rstd[r] * (dxh[i] - m1 - xh[i] * m2);
        }
      });
}

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Buffer out(x.data().begin(), x.data().end());
  return Tensor::make_op("reshape", std::move(shape), std::move(out), {x},
                         [x](std::span<const double> g, std::span<const double>) {
                           auto dx = sink(x);
                           for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
                         });
}

IndexMap permutation_index(const Shape& view, const std::vector<std::size_t>& axes) {
  const std::size_t nd = view.size();
  std::vector<bool> used(nd, false);
  if (axes.size() != nd) throw DimensionError("permute: axis list length differs from rank of " + shape_to_string(view));
  for (std::size_t a : axes) {
    if (a >= nd || used[a]) throw DimensionError("permute: axes are not a permutation");
    used[a] = true;
  }
  std::vector<std::size_t> in_strides(nd, 1);
  for (std::size_t i = nd; i-- > 1;) in_strides[i - 1] = in_strides[i] * view[i];
  Shape out_shape(nd);
  std::vector<std::size_t> src_stride(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    out_shape[i] = view[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  const std::size_t n = shape_numel(view);
  auto gather = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*gather)[i] = src;
    for (std::size_t ax = nd; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return gather;
}

Tensor take(const Tensor& x, Shape shape, IndexMap index) {
  if (!index || index->size() != shape_numel(shape)) {
    throw DimensionError("take: index map does not cover output shape " + shape_to_string(shape));
  }
  auto in = x.data();
  const std::size_t n = index->size();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (*index)[i];
    if (j >= in.size()) throw DimensionError("take: index out of range for " + shape_to_string(x.shape()));
    out[i] = in[j];
  }
  return Tensor::make_op("take", std::move(shape), std::move(out), {x},
                         [x, index](std::span<const double> g, std::span<const double>) {
                           auto dx = sink(x);
                           if (dx.empty()) return;
                           for (std::size_t i = 0; i < g.size(); ++i) dx[(*index)[i]] += g[i];
                         });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  auto index = permutation_index(x.shape(), axes);
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.size(axes[i]);
  return take(x, std::move(out_shape), std::move(index));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: shape " + shape_to_string(s) + " incompatible with " + shape_to_string(first));
    out_shape[axis] += s[axis];
  }
  const std::size_t inner = std::accumulate(first.begin() + static_cast<long>(axis) + 1, first.end(), std::size_t{1},
                                            std::multiplies<>());
  const std::size_t outer = std::accumulate(first.begin(), first.begin() + static_cast<long>(axis), std::size_t{1},
                                            std::multiplies<>());
  const std::size_t out_row = out_shape[axis] * inner;
  Buffer out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.size(axis) * inner;
    auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<long>(o * chunk), chunk, out.begin() + static_cast<long>(o * out_row + offset));
    }
    offset += chunk;
  }
  return Tensor::make_op("concat", std::move(out_shape), std::move(out), parts,
                         [parts, axis, inner, outer, out_row](std::span<const double> g, std::span<const double>) {
                           std::size_t offset = 0;
                           for (const auto& p : parts) {
                             const std::size_t chunk = p.size(axis) * inner;
                             auto dp = sink(p);
                             if (!dp.empty()) {
                               for (std::size_t o = 0; o < outer; ++o) {
                                 for (std::size_t i = 0; i < chunk; ++i) dp[o * chunk + i] += g[o * out_row + offset + i];
                               }
                             }
                             offset += chunk;
                           }
                         });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  require_ndim(x, 3, "upsample_nearest");
  if (factor < 1) throw DimensionError("upsample_nearest: factor must be >= 1");
  const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
  const std::size_t oh = h * factor, ow = w * factor;
  auto in = x.data();
  Buffer out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) out[(ch * oh + y) * ow + xx] = in[(ch * h + y / factor) * w + xx / factor];
    }
  }
  return Tensor::make_op("upsample_nearest", {c, oh, ow}, std::move(out), {x},
                         [x, c, h, w, oh, ow, factor](std::span<const double> g, std::span<const double>) {
                           auto dx = sink(x);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             for (std::size_t y = 0; y < oh; ++y) {
                               for (std::size_t xx = 0; xx < ow; ++xx) {
                                 dx[(ch * h + y / factor) * w + xx / factor] += g[(ch * oh + y) * ow + xx];
                               }
                             }
                           }
                         });
}

Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  require_ndim(x, 3, "crop");
  const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
  if (height == 0 || width == 0 || top + height > h || left + width > w) {
    throw DimensionError("crop: window " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                         std::to_string(top) + "," + std::to_string(left) + ") outside " + shape_to_string(x.shape()));
  }
  auto in = x.data();
  Buffer out(c * height * width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(in.begin() + static_cast<long>((ch * h + top + y) * w + left), width,
                  out.begin() + static_cast<long>((ch * height + y) * width));
    }
  }
  return Tensor::make_op("crop", {c, height, width}, std::move(out), {x},
                         [x, c, h, w, top, left, height, width](std::span<const double> g, std::span<const double>) {
                           auto dx = sink(x);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             for (std::size_t y = 0; y < height; ++y) {
                               for (std::size_t xx = 0; xx < width; ++xx) {
                                 dx[(ch * h + top + y) * w + left + xx] += g[(ch * height + y) * width + xx];
                               }
                             }
                           }
                         });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_op("sum", {1}, {total}, {x}, [x](std::span<const double> g, std::span<const double>) {
    auto dx = sink(x);
    for (double& d : dx) d += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_op("mean", {1}, {total / n}, {x}, [x, n](std::span<const double> g, std::span<const double>) {
    auto dx = sink(x);
    for (double& d : dx) d += g[0] / n;
  });
}

}  // namespace msatr
