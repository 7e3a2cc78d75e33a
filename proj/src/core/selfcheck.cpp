#include "msatr/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "msatr/attention.hpp"
#include "msatr/generator.hpp"
#include "msatr/gradcheck.hpp"
#include "msatr/losses.hpp"
#include "msatr/metrics.hpp"
#include "msatr/training.hpp"
#include "msatr/window_ops.hpp"

namespace msatr {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool avoid_zero = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (avoid_zero && std::abs(x) < 1e-3);
  }
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Contracts an output with fixed random weights so every output entry
// reaches the loss with a distinct coefficient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

CheckOutcome within(double err, double tol, const std::string& what) {
  return {err < tol, what + " " + fmt(err) + " (limit " + fmt(tol) + ")"};
}

std::vector<SelfCheck> op_checks() {
  std::vector<SelfCheck> c;
  Rng rng(0x5EEDULL);
  auto fixed = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi); };
  auto ws = [](std::function<Tensor(const Tensor&)> op) {
    return [op](const Tensor& x) { return weighted_sum(op(x), 77); };
  };

  const Tensor m34 = fixed({3, 4}), m42 = fixed({4, 2});
  c.push_back(gradient_check("grad:matmul.a", ws([=](const Tensor& x) { return matmul(x, m42); }), {3, 4}, 1));
  c.push_back(gradient_check("grad:matmul.b", ws([=](const Tensor& x) { return matmul(m34, x); }), {4, 2}, 2));
  const Tensor b3 = fixed({2, 4, 3}), b3t = fixed({2, 5, 3});
  c.push_back(gradient_check("grad:bmm", ws([=](const Tensor& x) { return bmm(x, b3); }), {2, 3, 4}, 3));
  c.push_back(gradient_check("grad:bmm.transposed", ws([=](const Tensor& x) { return bmm(b3t, x, true); }), {2, 4, 3}, 4));
  const Tensor lw = fixed({4, 3}), lb = fixed({3}), lx = fixed({5, 4});
  c.push_back(gradient_check("grad:linear.x", ws([=](const Tensor& x) { return linear(x, lw, lb); }), {5, 4}, 5));
  c.push_back(gradient_check("grad:linear.w", ws([=](const Tensor& x) { return linear(lx, x, lb); }), {4, 3}, 6));
  c.push_back(gradient_check("grad:linear.bias", ws([=](const Tensor& x) { return linear(lx, lw, x); }), {3}, 7));
  const Tensor cw = fixed({3, 2, 3, 3}), cb = fixed({3}), cx = fixed({2, 6, 5});
  c.push_back(gradient_check("grad:conv2d.x", ws([=](const Tensor& x) { return conv2d(x, cw, cb, 1, 1); }), {2, 6, 5}, 8));
  c.push_back(gradient_check("grad:conv2d.x.stride2", ws([=](const Tensor& x) { return conv2d(x, cw, cb, 2, 1); }),
                             {2, 7, 6}, 9));
  c.push_back(gradient_check("grad:conv2d.w", ws([=](const Tensor& x) { return conv2d(cx, x, cb, 2, 1); }),
                             {3, 2, 3, 3}, 10));
  c.push_back(gradient_check("grad:conv2d.bias", ws([=](const Tensor& x) { return conv2d(cx, cw, x, 1, 0); }), {3}, 11));
  const Tensor tw = fixed({2, 3, 2, 2}), tx = fixed({2, 3, 3});
  c.push_back(gradient_check("grad:conv_transpose2d.x",
                             ws([=](const Tensor& x) { return conv_transpose2d(x, tw, Tensor(), 2); }), {2, 3, 3}, 12));
  c.push_back(gradient_check("grad:conv_transpose2d.w",
                             ws([=](const Tensor& x) { return conv_transpose2d(tx, x, Tensor(), 2); }), {2, 3, 2, 2}, 13));
  const Tensor e = fixed({3, 4});
  c.push_back(gradient_check("grad:add", ws([=](const Tensor& x) { return add(x, e); }), {3, 4}, 14));
  c.push_back(gradient_check("grad:sub", ws([=](const Tensor& x) { return sub(e, x); }), {3, 4}, 15));
  c.push_back(gradient_check("grad:mul", ws([=](const Tensor& x) { return mul(x, e); }), {3, 4}, 16));
  c.push_back(gradient_check("grad:scale", ws([](const Tensor& x) { return scale(x, -1.7); }), {3, 4}, 17));
  c.push_back(gradient_check("grad:add_scalar", ws([](const Tensor& x) { return add_scalar(x, 0.3); }), {3, 4}, 18));
  c.push_back(gradient_check("grad:relu", ws([](const Tensor& x) { return relu(x); }), {3, 4}, 19));
  c.push_back(gradient_check("grad:leaky_relu", ws([](const Tensor& x) { return leaky_relu(x, 0.2); }), {3, 4}, 20));
  c.push_back(gradient_check("grad:sigmoid", ws([](const Tensor& x) { return sigmoid(x); }), {3, 4}, 21));
  c.push_back(gradient_check("grad:exp", ws([](const Tensor& x) { return exp(x); }), {3, 4}, 22));
  c.push_back(gradient_check("grad:log", ws([](const Tensor& x) { return log(x); }), {3, 4}, 23, 0.2, 2.0));
  c.push_back(gradient_check("grad:square", ws([](const Tensor& x) { return square(x); }), {3, 4}, 24));
  c.push_back(gradient_check("grad:sqrt", ws([](const Tensor& x) { return sqrt(x); }), {3, 4}, 25, 0.2, 2.0));
  c.push_back(gradient_check("grad:softplus", ws([](const Tensor& x) { return softplus(x); }), {3, 4}, 26, -3.0, 3.0));
  c.push_back(gradient_check("grad:gelu", ws([](const Tensor& x) { return gelu(x); }), {3, 4}, 27, -3.0, 3.0));
  c.push_back(gradient_check("grad:softmax", ws([](const Tensor& x) { return softmax(x, 1); }), {3, 5}, 28, -2.0, 2.0));
  c.push_back(gradient_check("grad:softmax.axis0", ws([](const Tensor& x) { return softmax(x, 0); }), {4, 3}, 29));
  const Tensor g6 = fixed({6}), b6 = fixed({6}), x6 = fixed({4, 6});
  c.push_back(gradient_check("grad:layer_norm.x", ws([=](const Tensor& x) { return layer_norm(x, g6, b6); }), {4, 6}, 30));
  c.push_back(gradient_check("grad:layer_norm.gamma", ws([=](const Tensor& x) { return layer_norm(x6, x, b6); }), {6}, 31));
  c.push_back(gradient_check("grad:layer_norm.beta", ws([=](const Tensor& x) { return layer_norm(x6, g6, x); }), {6}, 32));
  c.push_back(gradient_check("grad:reshape", ws([](const Tensor& x) { return reshape(x, {4, 3}); }), {3, 4}, 33));
  c.push_back(gradient_check("grad:permute", ws([](const Tensor& x) { return permute(x, {2, 0, 1}); }), {2, 3, 4}, 34));
  const Tensor cc = fixed({2, 2, 3});
  c.push_back(gradient_check("grad:concat", ws([=](const Tensor& x) { return concat({cc, x, cc}, 1); }), {2, 3, 3}, 35));
  c.push_back(gradient_check("grad:upsample_nearest", ws([](const Tensor& x) { return upsample_nearest(x, 2); }),
                             {2, 3, 2}, 36));
  c.push_back(gradient_check("grad:crop", ws([](const Tensor& x) { return crop(x, 1, 2, 2, 3); }), {2, 4, 6}, 37));
  c.push_back(gradient_check("grad:sum", [](const Tensor& x) { return sum(square(x)); }, {3, 4}, 38));
  c.push_back(gradient_check("grad:mean", [](const Tensor& x) { return mean(square(x)); }, {3, 4}, 39));
  const MhsaWeights mw = [&] {
    Rng r(40);
    return init_mhsa(8, 2, r);
  }();
  c.push_back(gradient_check("grad:mhsa", ws([=](const Tensor& x) { return mhsa(x, mw); }), {2, 5, 8}, 41));
  return c;
}

// Per-head explicit loops for softmax(Q K^T / sqrt(dh)) V, then W_o.
std::vector<double> mhsa_reference(const std::vector<double>& z, std::size_t len, std::size_t d, const MhsaWeights& w) {
  const std::size_t heads = w.num_heads, dh = d / heads;
  auto proj = [&](const Tensor& m) {
    std::vector<double> out(len * d, 0.0);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) out[i * d + j] += z[i * d + k] * m.at(k * d + j);
    return out;
  };
  const auto q = proj(w.wq), k = proj(w.wk), v = proj(w.wv);
  std::vector<double> ctx(len * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> s(len);
      double mx = -1e300;
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double tot = 0.0;
      for (auto& x : s) tot += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t c = 0; c < dh; ++c) ctx[i * d + h * dh + c] += s[j] / tot * v[j * d + h * dh + c];
    }
  }
  std::vector<double> out(len * d, 0.0);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t c = 0; c < d; ++c) out[i * d + j] += ctx[i * d + c] * w.wo.at(c * d + j);
  return out;
}

CheckOutcome generator_gradient() {
  GeneratorConfig cfg;
  cfg.height = cfg.width = 16;
  cfg.local_dim = 4;
  cfg.local_heads = 2;
  cfg.global_embed_dim = 8;
  cfg.global_heads = 2;
  cfg.global_out_dim = 4;
  cfg.fusion_channels = 8;
  const Generator g = Generator::create(cfg, 11);
  Rng rng(12);
  const Tensor x = random_tensor({3, 16, 16}, rng, 0.0, 1.0, false);
  const auto loss = [&] { return weighted_sum(g(x), 13); };
  // Ten random entries drawn across all parameters.
  const ParamList all = g.parameters();
  ParamList picked;
  for (std::size_t i = 0; i < 10; ++i) picked.push_back(all[rng.uniform_index(all.size())]);
  Rng entries(14);
  const GradCheckResult r = finite_diff_check_params(loss, picked, 1e-5, 1, &entries);
  return within(r.max_rel_error, kGradTolerance, "max relative error over " + std::to_string(r.checked) + " entries");
}

CheckOutcome partition_roundtrip() {
  Rng rng(21);
  for (std::size_t s : {2u, 4u, 8u}) {
    for (int rep = 0; rep < 20; ++rep) {
      const std::size_t h = s * rng.uniform_int(1, 3), w = s * rng.uniform_int(1, 3), c = rng.uniform_int(1, 4);
      const Tensor x = random_tensor({c, h, w}, rng);
      const Tensor back = window_reverse(window_partition(x, s), s, h, w);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        if (back.at(i) != x.at(i)) return {false, "roundtrip differs for s=" + std::to_string(s)};
      }
    }
  }
  return {true, "exact for s in {2,4,8}"};
}

CheckOutcome window_locality() {
  Rng rng(22);
  Rng wr(23);
  const WindowBlockWeights w = init_block(4, 2, wr);
  const std::size_t s = 4, h = 8, wd = 8;
  const Tensor x = random_tensor({4, h, wd}, rng);
  const Tensor y = window_attention_block(x, s, w);
  std::vector<double> v(x.data().begin(), x.data().end());
  v[(0 * h + 1) * wd + 2] += 0.5;  // pixel (1,2) lies in window 0
  const Tensor y2 = window_attention_block(Tensor::from_data(x.shape(), v), s, w);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < wd; ++j) {
        const std::size_t k = (c * h + i) * wd + j;
        const bool inside = i < s && j < s;
        if (!inside && y.at(k) != y2.at(k)) return {false, "change leaked outside its window"};
      }
    }
  }
  return {true, "outputs outside the perturbed window unchanged"};
}

CheckOutcome attention_oracle() {
  Rng rng(31);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t heads = rng.uniform_int(1, 4);
    const std::size_t d = heads * rng.uniform_int(1, 16 / heads);
    const std::size_t len = rng.uniform_int(1, 8);
    const MhsaWeights w = init_mhsa(d, heads, rng);
    const Tensor z = random_tensor({len, d}, rng);
    const Tensor out = mhsa(z, w);
    const auto ref = mhsa_reference(std::vector<double>(z.data().begin(), z.data().end()), len, d, w);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(out.at(i) - ref[i]));
  }
  return within(worst, 1e-10, "max abs difference");
}

CheckOutcome loss_oracles() {
  const Tensor a = Tensor::full({3, 8, 8}, 0.4);
  const Tensor b = Tensor::full({3, 8, 8}, 0.5);
  const Region all{0, 0, 8, 8};
  double worst = std::abs(luminance_consistency_loss(a, a, all).item());
  worst = std::max(worst, std::abs(luminance_consistency_loss(b, a, all).item() - 0.01));
  const auto adv = adversarial_losses(Tensor::zeros({1}), Tensor::zeros({1}));
  worst = std::max(worst, std::abs(adv.d_loss.item() - 2.0 * std::log(2.0)));
  worst = std::max(worst, std::abs(adv.g_loss.item() - std::log(2.0)));
  const Tensor c = Tensor::full({3, 8, 8}, 0.7);
  worst = std::max(worst, std::abs(identity_invariant_loss(b, c).item() - 0.04));
  return within(worst, 1e-12, "max deviation");
}

CheckOutcome mixing_invariants() {
  Rng rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    const Tensor in = random_tensor({3, 16, 16}, rng, 0.0, 1.0, false);
    const Tensor out = random_tensor({3, 16, 16}, rng, 0.0, 1.0, false);
    const MixResult m = mix_images(in, out, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 16; ++y) {
        for (std::size_t x = 0; x < 16; ++x) {
          const std::size_t k = (c * 16 + y) * 16 + x;
          const bool inside = y >= m.region.top && y < m.region.top + m.region.height && x >= m.region.left &&
                              x < m.region.left + m.region.width;
          const double v = m.mixed.at(k);
          if (!inside && v != in.at(k)) return {false, "pixel outside the region changed"};
          if (inside && (v < std::min(in.at(k), out.at(k)) || v > std::max(in.at(k), out.at(k)))) {
            return {false, "mixed pixel outside the source interval"};
          }
        }
      }
    }
  }
  return {true, "200 draws within bounds"};
}

CheckOutcome metric_oracles() {
  const Tensor a = Tensor::full({3, 16, 16}, 0.5);
  const Tensor b = Tensor::full({3, 16, 16}, 0.6);
  double worst = std::abs(psnr(a, b) - 20.0);
  Rng rng(51);
  const Tensor r = random_tensor({3, 16, 16}, rng, 0.0, 1.0, false);
  worst = std::max(worst, std::abs(ssim(r, r) - 1.0));
  return within(worst, 1e-10, "max deviation");
}

CheckOutcome adam_reference() {
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  AdamState state;
  double ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * ref;  // d/dp p^2
    p.zero_grad();
    sum(square(p)).backward();
    adam_step({{"p", p}}, state, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.01 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  return within(std::abs(p.item() - ref), 1e-12, "deviation from scalar recurrence");
}

}  // namespace

SelfCheck gradient_check(std::string name, std::function<Tensor(const Tensor&)> f, Shape shape, std::uint64_t seed,
                         double lo, double hi) {
  return {std::move(name), [f = std::move(f), shape = std::move(shape), seed, lo, hi] {
            Rng rng(seed);
            const Tensor x = random_tensor(shape, rng, lo, hi);
            return within(finite_diff_check(f, x), kGradTolerance, "max relative error");
          }};
}

SelfCheck faulty_backward_check() {
  auto faulty_square = [](const Tensor& x) {
    Buffer out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * x.at(i);
    return Tensor::make_op("faulty_square", x.shape(), std::move(out), {x},
                           [x](std::span<const double> g, std::span<const double>) {
                             Tensor in = x;
                             auto dx = in.grad_buffer();
                             for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * 3.0 * in.at(i);
                           });
  };
  return gradient_check("grad:faulty_square", [=](const Tensor& x) { return weighted_sum(faulty_square(x), 5); },
                        {3, 4}, 99);
}

std::vector<SelfCheck> builtin_checks() {
  std::vector<SelfCheck> checks = op_checks();
  checks.push_back({"grad:generator", generator_gradient});
  checks.push_back({"partition:roundtrip", partition_roundtrip});
  checks.push_back({"partition:locality", window_locality});
  checks.push_back({"attention:oracle", attention_oracle});
  checks.push_back({"loss:oracles", loss_oracles});
  checks.push_back({"mix:invariants", mixing_invariants});
  checks.push_back({"metrics:oracles", metric_oracles});
  checks.push_back({"adam:reference", adam_reference});
  return checks;
}

std::vector<CheckResult> run_checks(const std::vector<SelfCheck>& checks,
                                    const std::function<void(const CheckResult&)>& progress) {
  std::vector<CheckResult> results;
  for (const auto& c : checks) {
    CheckResult r;
    r.name = c.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const CheckOutcome o = c.run();
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) progress(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace msatr
