#pragma once

// Full-reference quality metrics and the repeated-enhancement exposure probe.

#include <functional>
#include <string>
#include <vector>

#include "msatr/tensor.hpp"

namespace msatr {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kSaturationThreshold = 0.95;

double mse(const Tensor& a, const Tensor& b);
// 10 log10(1 / MSE) for data in [0,1]; kPsnrCap when MSE is zero.
double psnr(const Tensor& a, const Tensor& b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

// Mean local SSIM over every fully contained Gaussian window, computed per
// channel and then averaged. Inputs are [C,H,W] with H, W >= window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opts = {});

struct ExposureStats {
  double mean_luminance = 0.0;    // mean of 0.299 R + 0.587 G + 0.114 B
  double saturation_fraction = 0.0;  // share of channel values above kSaturationThreshold
};

ExposureStats exposure_stats(const Tensor& x);

// Applies `enhance` n times, feeding each output back in; entry i holds the
// statistics after pass i+1.
std::vector<ExposureStats> exposure_stability(const std::function<Tensor(const Tensor&)>& enhance, const Tensor& x,
                                              std::size_t n);

// Saturation fraction after the last pass minus after the first.
double saturation_growth(const std::vector<ExposureStats>& series);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<ExposureStats> drift;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> skipped;

  double mean_psnr() const;
  double mean_ssim() const;
  // Tab-separated table with a header line, then a "# mean" summary line.
  std::string to_tsv() const;
  std::string summary() const;
};

}  // namespace msatr
