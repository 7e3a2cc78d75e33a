#include "doctest.h"
#include "msatr/errors.hpp"
#include "msatr/metrics.hpp"
#include "support.hpp"

using namespace msatr;
using testsupport::random_tensor;

TEST_CASE("psnr oracles") {
  Tensor a = Tensor::full({3, 8, 8}, 0.5);
  CHECK(std::abs(psnr(a, add_scalar(a, 0.1)) - 20.0) < 1e-9);
  CHECK(psnr(a, add_scalar(a, 0.01)) == doctest::Approx(40.0).epsilon(1e-9));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(mse(a, add_scalar(a, -0.3)) == doctest::Approx(0.09).epsilon(1e-12));
  CHECK_THROWS(psnr(a, Tensor::full({3, 8, 4}, 0.5)));
}

TEST_CASE("ssim of identical images is one") {
  Rng rng(1);
  Tensor x = random_tensor({3, 24, 20}, rng, 0, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ssim matches the sliding-window scalar reference") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 11 + rng.uniform_index(14), w = 11 + rng.uniform_index(14);
    Tensor a = random_tensor({3, h, w}, rng, 0, 1);
    Tensor b = add(scale(a, 0.7), random_tensor({3, h, w}, rng, 0, 0.3));
    CHECK(std::abs(ssim(a, b) - testsupport::ref_ssim(a, b)) < 1e-10);
  }
}

TEST_CASE("ssim properties") {
  Rng rng(3);
  Tensor a = random_tensor({1, 16, 16}, rng, 0, 1), b = random_tensor({1, 16, 16}, rng, 0, 1);
  const double s = ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(s < ssim(a, add(scale(a, 0.9), scale(b, 0.1))));
  CHECK_THROWS_AS(ssim(Tensor::zeros({3, 10, 16}), Tensor::zeros({3, 10, 16})), ContractError);
}

TEST_CASE("exposure statistics") {
  Tensor x = Tensor::zeros({3, 2, 2});
  auto d = x.mutable_data();
  // pixel 0 white, pixel 1 pure red, others black
  d[0] = d[4] = d[8] = 1.0;
  d[1] = 1.0;
  ExposureStats s = exposure_stats(x);
  CHECK(s.mean_luminance == doctest::Approx((1.0 + 0.299) / 4).epsilon(1e-14));
  CHECK(s.saturation_fraction == doctest::Approx(4.0 / 12));
  CHECK(exposure_stats(Tensor::full({3, 2, 2}, 0.95)).saturation_fraction == 0.0);
}

TEST_CASE("repeated enhancement series and saturation growth") {
  auto brighten = [](const Tensor& t) { return sigmoid(scale(add_scalar(t, -0.3), 6.0)); };
  Rng rng(4);
  Tensor x = random_tensor({3, 8, 8}, rng, 0, 1);
  auto series = exposure_stability(brighten, x, 3);
  REQUIRE(series.size() == 3);
  Tensor once = brighten(x), twice = brighten(once), thrice = brighten(twice);
  CHECK(series[0].mean_luminance == exposure_stats(once).mean_luminance);
  CHECK(series[2].saturation_fraction == exposure_stats(thrice).saturation_fraction);
  CHECK(saturation_growth(series) == series[2].saturation_fraction - series[0].saturation_fraction);
  auto ident = exposure_stability([](const Tensor& t) { return t; }, x, 4);
  CHECK(saturation_growth(ident) == 0.0);
}

TEST_CASE("report aggregation and table") {
  EvalReport r;
  r.rows.push_back({"a.ppm", 20.0, 0.5, {{0.3, 0.1}, {0.4, 0.2}}});
  r.rows.push_back({"b.ppm", 30.0, 0.7, {{0.2, 0.0}, {0.25, 0.05}}});
  r.skipped.push_back("c.ppm");
  CHECK(r.mean_psnr() == 25.0);
  CHECK(r.mean_ssim() == doctest::Approx(0.6));
  const std::string tsv = r.to_tsv();
  CHECK(tsv.rfind("name\tpsnr\tssim", 0) == 0);
  CHECK(tsv.find("a.ppm\t20.") != std::string::npos);
  CHECK(tsv.find("# skipped") != std::string::npos);
  CHECK(tsv.find("# mean") != std::string::npos);
  CHECK(r.summary() == "pairs=2 skipped=1 mean_psnr=25.000000 mean_ssim=0.600000");
}
