#include "msatr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "msatr/errors.hpp"

namespace msatr {

namespace {

void require_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shapes differ " + shape_to_string(a.shape()) + " vs " +
                        shape_to_string(b.shape()));
  }
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(const double* src, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * src[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_pair(a, b, "mse");
  auto av = a.data(), bv = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  return acc / static_cast<double>(av.size());
}

double psnr(const Tensor& a, const Tensor& b) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opts) {
  require_pair(a, b, "ssim");
  if (a.ndim() != 3) throw ContractError("ssim: expected [C,H,W], got " + shape_to_string(a.shape()));
  const std::size_t c = a.size(0), h = a.size(1), w = a.size(2);
  if (h < opts.window || w < opts.window) {
    throw ContractError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                        std::to_string(opts.window) + "x" + std::to_string(opts.window) + " window");
  }
  const auto k = gaussian_kernel(opts.window, opts.sigma);
  const std::size_t plane = h * w;
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* x = a.data().data() + ch * plane;
    const double* y = b.data().data() + ch * plane;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx.data(), h, w, k);
    const auto syy = filter_valid(yy.data(), h, w, k);
    const auto sxy = filter_valid(xy.data(), h, w, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + opts.c1) * (2.0 * cov + opts.c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + opts.c1) * (vx + vy + opts.c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(c);
}

ExposureStats exposure_stats(const Tensor& x) {
  if (x.ndim() != 3 || x.size(0) != 3) throw ContractError("exposure_stats: expected [3,H,W], got " + shape_to_string(x.shape()));
  const std::size_t plane = x.size(1) * x.size(2);
  auto d = x.data();
  double lum = 0.0;
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < plane; ++i) lum += 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  for (double v : d) saturated += v > kSaturationThreshold;
  return {lum / static_cast<double>(plane), static_cast<double>(saturated) / static_cast<double>(d.size())};
}

std::vector<ExposureStats> exposure_stability(const std::function<Tensor(const Tensor&)>& enhance, const Tensor& x,
                                              std::size_t n) {
  if (n == 0) throw ContractError("exposure_stability: at least one pass is required");
  NoGradGuard guard;
  std::vector<ExposureStats> out;
  Tensor cur = x;
  for (std::size_t i = 0; i < n; ++i) {
    cur = enhance(cur);
    out.push_back(exposure_stats(cur));
  }
  return out;
}

double saturation_growth(const std::vector<ExposureStats>& series) {
  if (series.empty()) return 0.0;
  return series.back().saturation_fraction - series.front().saturation_fraction;
}

double EvalReport::mean_psnr() const {
  double acc = 0.0;
  for (const auto& r : rows) acc += r.psnr;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

double EvalReport::mean_ssim() const {
  double acc = 0.0;
  for (const auto& r : rows) acc += r.ssim;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

std::string EvalReport::summary() const {
  return "pairs=" + std::to_string(rows.size()) + " skipped=" + std::to_string(skipped.size()) +
         " mean_psnr=" + fmt(mean_psnr()) + " mean_ssim=" + fmt(mean_ssim());
}

std::string EvalReport::to_tsv() const {
  std::ostringstream out;
  std::size_t passes = 0;
  for (const auto& r : rows) passes = std::max(passes, r.drift.size());
  out << "name\tpsnr\tssim";
  for (std::size_t i = 1; i <= passes; ++i) out << "\tlum" << i << "\tsat" << i;
  out << "\n";
  for (const auto& r : rows) {
    out << r.name << "\t" << fmt(r.psnr) << "\t" << fmt(r.ssim);
    for (std::size_t i = 0; i < passes; ++i) {
      if (i < r.drift.size()) {
        out << "\t" << fmt(r.drift[i].mean_luminance) << "\t" << fmt(r.drift[i].saturation_fraction);
      } else {
        out << "\t-\t-";
      }
    }
    out << "\n";
  }
  for (const auto& s : skipped) out << "# skipped\t" << s << "\n";
  out << "# mean\t" << fmt(mean_psnr()) << "\t" << fmt(mean_ssim()) << "\n";
  return out.str();
}

}  // namespace msatr
