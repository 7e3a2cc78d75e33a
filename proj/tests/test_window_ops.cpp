#include "doctest.h"
#include "msatr/errors.hpp"
#include "msatr/gradcheck.hpp"
#include "msatr/window_ops.hpp"
#include "support.hpp"

using namespace msatr;
using testsupport::max_abs_diff;
using testsupport::random_tensor;
using testsupport::values;

TEST_CASE("window k holds the s x s block at its grid position, row-major inside") {
  Rng rng(1);
  const std::size_t c = 3, h = 8, w = 16, s = 4, nw = w / s;
  Tensor x = random_tensor({c, h, w}, rng);
  Tensor win = window_partition(x, s);
  REQUIRE(win.shape() == Shape{(h / s) * nw, s * s, c});
  for (std::size_t k = 0; k < win.size(0); ++k)
    for (std::size_t t = 0; t < s * s; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t y = (k / nw) * s + t / s, xx = (k % nw) * s + t % s;
        CHECK(win.at((k * s * s + t) * c + ch) == x.at((ch * h + y) * w + xx));
      }
}

TEST_CASE("partition then reverse is the identity for s in {2,4,8}") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t s = std::size_t{2} << (trial % 3);
    const std::size_t h = 8 * rng.uniform_int(1, 3), w = 8 * rng.uniform_int(1, 3), c = rng.uniform_int(1, 5);
    Tensor x = random_tensor({c, h, w}, rng);
    CHECK(values(window_reverse(window_partition(x, s), s, h, w)) == values(x));
  }
}

TEST_CASE("layout validation") {
  CHECK_THROWS_AS(WindowLayout::for_feature_map(3, 12, 16, 8), PartitionError);
  CHECK_THROWS_AS(WindowLayout::for_feature_map(3, 12, 12, 3), PartitionError);
  auto l = WindowLayout::for_feature_map(5, 16, 32, 4);
  CHECK(l.num_windows() == 32);
  CHECK(l.tokens_per_window() == 16);
  CHECK_THROWS_AS(window_partition(Tensor::zeros({2, 6, 8}), 4), PartitionError);
}

TEST_CASE("window ops propagate gradients") {
  Rng rng(3);
  Tensor x = random_tensor({2, 8, 8}, rng, -1, 1, true);
  Tensor wts = random_tensor({4, 16, 2}, rng);
  CHECK(finite_diff_check([&](const Tensor& t) { return sum(mul(window_partition(t, 4), wts)); }, x) < 1e-4);
  Tensor wins = random_tensor({4, 16, 2}, rng, -1, 1, true);
  Tensor wts2 = random_tensor({2, 8, 8}, rng);
  CHECK(finite_diff_check([&](const Tensor& t) { return sum(mul(window_reverse(t, 4, 8, 8), wts2)); }, wins) < 1e-4);
}

TEST_CASE("patch embedding is a per-patch linear map") {
  Rng rng(4);
  const std::size_t d = 5;
  Tensor x = random_tensor({3, 16, 24}, rng);
  ConvParams proj{random_tensor({d, 3, 8, 8}, rng), random_tensor({d}, rng)};
  Tensor tok = patch_embed(x, proj);
  REQUIRE(tok.shape() == Shape{6, d});
  for (std::size_t p = 0; p < 6; ++p)
    for (std::size_t o = 0; o < d; ++o) {
      double acc = proj.bias.at(o);
      const std::size_t py = p / 3, px = p % 3;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 8; ++i)
          for (std::size_t j = 0; j < 8; ++j)
            acc += proj.weight.at(((o * 3 + c) * 8 + i) * 8 + j) * x.at((c * 16 + py * 8 + i) * 24 + px * 8 + j);
      CHECK(tok.at(p * d + o) == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(patch_embed(Tensor::zeros({3, 12, 16}), proj), DimensionError);
}

TEST_CASE("positional encoding must match the token grid") {
  Tensor tok = Tensor::full({4, 3}, 1.0);
  Tensor pos = Tensor::full({4, 3}, 0.5);
  CHECK(values(add_positional_encoding(tok, pos)) == std::vector<double>(12, 1.5));
  CHECK_THROWS_AS(add_positional_encoding(Tensor::zeros({16, 3}), pos), ConfigError);
}

TEST_CASE("patch recovering restores full resolution") {
  Rng rng(5);
  PatchRecoverWeights w;
  w.stages = {init_conv(6, 4, 3, 3, rng), init_conv(6, 6, 3, 3, rng), init_conv(3, 6, 3, 3, rng)};
  Tensor out = patch_recover(random_tensor({2 * 3, 4}, rng), w, 16, 24);
  CHECK(out.shape() == Shape{3, 16, 24});
  CHECK_THROWS(patch_recover(random_tensor({5, 4}, rng), w, 16, 24));
}
