#include "doctest.h"
#include "msatr/errors.hpp"
#include "msatr/gradcheck.hpp"
#include "support.hpp"

using namespace msatr;
using testsupport::max_abs_diff;
using testsupport::random_tensor;
using testsupport::values;

namespace {

// Contracts an op output with fixed random weights so every output entry
// contributes to the checked scalar.
Tensor contract(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, -1.0, 1.0)));
}

double grad_error(const std::function<Tensor(const Tensor&)>& f, const Shape& shape, std::uint64_t seed,
                  double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor x = random_tensor(shape, rng, lo, hi, true);
  // keep clear of kinks at zero
  for (double& v : x.mutable_data())
    if (std::abs(v) < 1e-2) v = v < 0 ? -1e-2 : 1e-2;
  return finite_diff_check([&](const Tensor& t) { return contract(f(t), seed + 1); }, x);
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("matmul agrees with a triple loop across sizes") {
  Rng rng(1);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 2}, {17, 9, 31}, {64, 48, 40}}) {
    Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    CHECK(max_abs_diff(values(matmul(a, b)), testsupport::ref_matmul(values(a), values(b), m, k, n)) < 1e-12);
  }
}

TEST_CASE("bmm matches per-batch loops, including transposed right operand") {
  Rng rng(2);
  for (std::size_t m : {2u, 9u, 40u}) {
    const std::size_t bsz = 3, k = 5, n = 7;
    Tensor a = random_tensor({bsz, m, k}, rng), b = random_tensor({bsz, k, n}, rng);
    Tensor bt = permute(b, {0, 2, 1});
    auto c = values(bmm(a, b));
    auto ct = values(bmm(a, bt, true));
    for (std::size_t i = 0; i < bsz; ++i) {
      std::vector<double> ai(a.data().begin() + i * m * k, a.data().begin() + (i + 1) * m * k);
      std::vector<double> bi(b.data().begin() + i * k * n, b.data().begin() + (i + 1) * k * n);
      auto ref = testsupport::ref_matmul(ai, bi, m, k, n);
      std::vector<double> ci(c.begin() + i * m * n, c.begin() + (i + 1) * m * n);
      std::vector<double> cti(ct.begin() + i * m * n, ct.begin() + (i + 1) * m * n);
      CHECK(max_abs_diff(ci, ref) < 1e-12);
      CHECK(max_abs_diff(cti, ref) < 1e-12);
    }
  }
}

TEST_CASE("conv2d matches direct correlation for strides and padding") {
  Rng rng(3);
  for (auto [stride, pad, k] : {std::array<std::size_t, 3>{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {8, 0, 8}}) {
    Tensor x = random_tensor({3, 16, 16}, rng);
    Tensor w = random_tensor({5, 3, k, k}, rng);
    Tensor b = random_tensor({5}, rng);
    CHECK(max_abs_diff(values(conv2d(x, w, b, stride, pad)), testsupport::ref_conv2d(x, w, b, stride, pad)) < 1e-12);
  }
}

TEST_CASE("conv_transpose2d equals scattered outer products") {
  Rng rng(4);
  Tensor x = random_tensor({2, 4, 5}, rng), w = random_tensor({2, 3, 2, 3}, rng), b = random_tensor({3}, rng);
  const std::size_t s = 2, oh = (4 - 1) * s + 2, ow = (5 - 1) * s + 3;
  std::vector<double> ref(3 * oh * ow);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < oh * ow; ++i) ref[o * oh * ow + i] = b.at(o);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t xx = 0; xx < 5; ++xx)
        for (std::size_t o = 0; o < 3; ++o)
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j)
              ref[(o * oh + y * s + i) * ow + xx * s + j] += x.at((c * 4 + y) * 5 + xx) * w.at(((c * 3 + o) * 2 + i) * 3 + j);
  Tensor out = conv_transpose2d(x, w, b, s);
  CHECK(out.shape() == Shape{3, oh, ow});
  CHECK(max_abs_diff(values(out), ref) < 1e-12);
}

TEST_CASE("elementwise and normalization values") {
  Tensor x = Tensor::from_data({4}, {-2.0, -0.5, 0.0, 3.0});
  CHECK(values(leaky_relu(x, 0.2)) == std::vector<double>{-0.4, -0.1, 0.0, 3.0});
  CHECK(softplus(Tensor::scalar(800.0)).item() == doctest::Approx(800.0));
  CHECK(softplus(Tensor::scalar(-800.0)).item() >= 0.0);
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (double v : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double ref = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
    CHECK(gelu(Tensor::scalar(v)).item() == doctest::Approx(ref).epsilon(1e-14));
  }

  Rng rng(5);
  Tensor s = softmax(random_tensor({3, 4, 5}, rng, -30, 30), 2);
  for (std::size_t r = 0; r < 12; ++r) {
    double acc = 0;
    for (std::size_t j = 0; j < 5; ++j) acc += s.at(r * 5 + j);
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-14));
  }

  Tensor z = random_tensor({2, 6}, rng);
  Tensor ln = layer_norm(z, Tensor::full({6}, 1.0), Tensor::zeros({6}));
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 6; ++j) mu += z.at(r * 6 + j) / 6;
    for (std::size_t j = 0; j < 6; ++j) var += (z.at(r * 6 + j) - mu) * (z.at(r * 6 + j) - mu) / 6;
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(ln.at(r * 6 + j) == doctest::Approx((z.at(r * 6 + j) - mu) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("layout ops") {
  Rng rng(6);
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) CHECK(p.at((c * 2 + a) * 3 + b) == x.at((a * 3 + b) * 4 + c));

  Tensor img = random_tensor({2, 3, 3}, rng);
  Tensor up = upsample_nearest(img, 2);
  CHECK(up.shape() == Shape{2, 6, 6});
  CHECK(up.at((1 * 6 + 5) * 6 + 2) == img.at((1 * 3 + 2) * 3 + 1));

  Tensor cr = crop(img, 1, 0, 2, 2);
  CHECK(cr.at(0) == img.at(3));
  Tensor cat = concat({img, img}, 0);
  CHECK(cat.shape() == Shape{4, 3, 3});
  CHECK(cat.at(2 * 9 + 4) == img.at(4));
  CHECK_THROWS_AS(concat({img, up}, 0), DimensionError);
}

TEST_CASE("every differentiable op passes a central-difference check") {
  SUBCASE("linear algebra") {
    Rng rng(7);
    Tensor b = random_tensor({4, 3}, rng), w = random_tensor({2, 3, 3, 3}, rng);
    Tensor bias = random_tensor({2}, rng);
    CHECK(grad_error([&](const Tensor& a) { return matmul(a, b); }, {5, 4}, 10) < kTol);
    CHECK(grad_error([&](const Tensor& a) { return matmul(b, a); }, {3, 2}, 11) < kTol);
    Tensor bb = random_tensor({2, 4, 3}, rng);
    CHECK(grad_error([&](const Tensor& a) { return bmm(a, bb); }, {2, 5, 4}, 12) < kTol);
    CHECK(grad_error([&](const Tensor& a) { return bmm(bb, a, true); }, {2, 6, 3}, 13) < kTol);
    CHECK(grad_error([&](const Tensor& x) { return conv2d(x, w, bias, 2, 1); }, {3, 6, 6}, 14) < kTol);
    Tensor img = random_tensor({3, 5, 5}, rng);
    CHECK(grad_error([&](const Tensor& k) { return conv2d(img, k, bias, 1, 1); }, {2, 3, 3, 3}, 15) < kTol);
    Tensor wt = random_tensor({3, 2, 2, 2}, rng);
    CHECK(grad_error([&](const Tensor& x) { return conv_transpose2d(x, wt, Tensor(), 2); }, {3, 3, 3}, 16) < kTol);
    Tensor lw = random_tensor({4, 6}, rng), lb = random_tensor({6}, rng);
    CHECK(grad_error([&](const Tensor& x) { return linear(x, lw, lb); }, {3, 4}, 17) < kTol);
  }
  SUBCASE("elementwise") {
    Rng rng(8);
    Tensor other = random_tensor({3, 4}, rng);
    CHECK(grad_error([&](const Tensor& x) { return add(x, other); }, {3, 4}, 20) < kTol);
    CHECK(grad_error([&](const Tensor& x) { return sub(other, x); }, {3, 4}, 21) < kTol);
    CHECK(grad_error([&](const Tensor& x) { return mul(x, x); }, {3, 4}, 22) < kTol);
    CHECK(grad_error([](const Tensor& x) { return scale(x, -1.7); }, {3, 4}, 23) < kTol);
    CHECK(grad_error([](const Tensor& x) { return add_scalar(x, 0.3); }, {3, 4}, 24) < kTol);
    CHECK(grad_error([](const Tensor& x) { return relu(x); }, {3, 4}, 25) < kTol);
    CHECK(grad_error([](const Tensor& x) { return leaky_relu(x, 0.2); }, {3, 4}, 26) < kTol);
    CHECK(grad_error([](const Tensor& x) { return sigmoid(x); }, {3, 4}, 27) < kTol);
    CHECK(grad_error([](const Tensor& x) { return exp(x); }, {3, 4}, 28) < kTol);
    CHECK(grad_error([](const Tensor& x) { return log(x); }, {3, 4}, 29, 0.1, 2.0) < kTol);
    CHECK(grad_error([](const Tensor& x) { return square(x); }, {3, 4}, 30) < kTol);
    CHECK(grad_error([](const Tensor& x) { return sqrt(x); }, {3, 4}, 31, 0.1, 2.0) < kTol);
    CHECK(grad_error([](const Tensor& x) { return softplus(x); }, {3, 4}, 32, -5, 5) < kTol);
    CHECK(grad_error([](const Tensor& x) { return gelu(x); }, {3, 4}, 33, -3, 3) < kTol);
  }
  SUBCASE("normalization, layout and reductions") {
    Rng rng(9);
    Tensor g = random_tensor({5}, rng, 0.5, 1.5), be = random_tensor({5}, rng);
    CHECK(grad_error([](const Tensor& x) { return softmax(x, 1); }, {3, 5}, 40) < kTol);
    CHECK(grad_error([](const Tensor& x) { return softmax(x, 0); }, {3, 5}, 41) < kTol);
    CHECK(grad_error([&](const Tensor& x) { return layer_norm(x, g, be); }, {4, 5}, 42) < kTol);
    Tensor z = random_tensor({4, 5}, rng);
    CHECK(grad_error([&](const Tensor& gamma) { return layer_norm(z, gamma, be); }, {5}, 43) < kTol);
    CHECK(grad_error([](const Tensor& x) { return reshape(x, {6, 2}); }, {3, 4}, 44) < kTol);
    CHECK(grad_error([](const Tensor& x) { return permute(x, {2, 0, 1}); }, {2, 3, 4}, 45) < kTol);
    CHECK(grad_error([&](const Tensor& x) { return concat({x, x}, 1); }, {2, 3, 2}, 46) < kTol);
    CHECK(grad_error([](const Tensor& x) { return upsample_nearest(x, 2); }, {2, 3, 3}, 47) < kTol);
    CHECK(grad_error([](const Tensor& x) { return crop(x, 1, 2, 2, 2); }, {2, 4, 5}, 48) < kTol);
    CHECK(grad_error([](const Tensor& x) { return sum(x); }, {3, 4}, 49) < kTol);
    CHECK(grad_error([](const Tensor& x) { return mean(x); }, {3, 4}, 50) < kTol);
    IndexMap idx = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{3, 0, 0, 5, 2});
    CHECK(grad_error([&](const Tensor& x) { return take(x, {5}, idx); }, {6}, 51) < kTol);
  }
}

TEST_CASE("gradients accumulate across backward calls until zero_grad") {
  Tensor x = Tensor::from_data({2}, {1.0, -2.0}, true);
  sum(square(x)).backward();
  sum(square(x)).backward();
  CHECK(values(Tensor::from_data({2}, {x.grad()[0], x.grad()[1]})) == std::vector<double>{4.0, -8.0});
  x.zero_grad();
  sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("graph recording and contract checks") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    Tensor y = square(x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(square(x).requires_grad());
  CHECK_THROWS_AS(square(x).backward(), ContractError);  // not a scalar
  CHECK_THROWS_AS(sum(Tensor::zeros({2})).backward(), ContractError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  Tensor d = x.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.data()[1] == 2.0);
}

TEST_CASE("a wrong backward rule is caught by the gradient checker") {
  auto bad_square = [](const Tensor& x) {
    Buffer out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * x.at(i);
    return Tensor::make_op("bad_square", x.shape(), std::move(out), {x},
                           [x](std::span<const double> g, std::span<const double>) {
                             Tensor in = x;
                             auto gx = in.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * 3.0 * x.at(i);
                           });
  };
  CHECK(grad_error(bad_square, {4}, 60) > 0.1);
}
