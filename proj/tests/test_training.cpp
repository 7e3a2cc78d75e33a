#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "msatr/errors.hpp"
#include "msatr/synthetic.hpp"
#include "msatr/training.hpp"
#include "support.hpp"

using namespace msatr;
using testsupport::random_tensor;
using testsupport::values;

TEST_CASE("learning rate holds, then decays linearly to zero") {
  TrainConfig c;
  c.lr_init = 1e-3;
  c.total_steps = 100;
  CHECK(learning_rate(c, 0) == 1e-3);
  CHECK(learning_rate(c, 49) == 1e-3);
  CHECK(learning_rate(c, 50) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 75) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(learning_rate(c, 100) == 0.0);
  c.total_steps = 7;
  double prev = 1.0;
  for (std::size_t s = 0; s <= 7; ++s) {
    CHECK(learning_rate(c, s) <= prev);
    prev = learning_rate(c, s);
  }
  CHECK(learning_rate(c, 7) == 0.0);
}

TEST_CASE("region mixing invariants over seeded draws") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t h = 8 * rng.uniform_int(1, 4), w = 8 * rng.uniform_int(1, 4);
    Tensor in = random_tensor({3, h, w}, rng, 0, 1), out = random_tensor({3, h, w}, rng, 0, 1);
    MixResult m = mix_images(in, out, rng);
    const Region& r = m.region;
    CHECK(r.height >= (h + 3) / 4);
    CHECK(r.height <= 3 * h / 4);
    CHECK(r.width >= (w + 3) / 4);
    CHECK(r.width <= 3 * w / 4);
    CHECK(r.top + r.height <= h);
    CHECK(r.left + r.width <= w);
    CHECK(m.alpha >= 0.0);
    CHECK(m.alpha < 1.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t i = (c * h + y) * w + x;
          const bool inside = y >= r.top && y < r.top + r.height && x >= r.left && x < r.left + r.width;
          if (inside) {
            CHECK(m.mixed.at(i) >= std::min(in.at(i), out.at(i)));
            CHECK(m.mixed.at(i) <= std::max(in.at(i), out.at(i)));
          } else {
            CHECK(m.mixed.at(i) == in.at(i));
          }
        }
  }
}

TEST_CASE("mixing limits and constant example") {
  Tensor in = Tensor::full({3, 8, 8}, 0.2), out = Tensor::full({3, 8, 8}, 0.8);
  Region r{1, 2, 4, 3};
  Rng rng(1);
  CHECK(values(mix_region(in, out, r, 0.0)) == values(in));
  Tensor one = mix_region(in, out, r, 1.0);
  Tensor quarter = mix_region(in, out, r, 0.25);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const bool inside = y >= 1 && y < 5 && x >= 2 && x < 5;
      CHECK(one.at(y * 8 + x) == (inside ? 0.8 : 0.2));
      CHECK(quarter.at(y * 8 + x) == doctest::Approx(inside ? 0.35 : 0.2).epsilon(1e-15));
    }
  CHECK_THROWS_AS(mix_images(in, Tensor::zeros({3, 8, 16}), rng), ContractError);
}

TEST_CASE("an identity generator is a fixed point of the loop") {
  Rng rng(2);
  Tensor low = random_tensor({3, 16, 16}, rng, 0, 0.4);
  auto g = [](const Tensor& x) { return x; };
  Tensor enhanced = g(low);
  MixResult m = mix_images(low, enhanced, rng);
  CHECK(luminance_consistency_loss(g(m.mixed), enhanced, m.region).item() == 0.0);
}

TEST_CASE("adam matches a scalar recurrence and leaves zero-gradient params alone") {
  Tensor p = Tensor::from_data({3}, {0.5, -1.0, 2.0}, true);
  Tensor frozen = Tensor::from_data({2}, {1.0, 1.0}, true);
  ParamList params{{"p", p}, {"frozen", frozen}};
  AdamState st;
  std::vector<testsupport::ScalarAdam> ref(3);
  std::vector<double> expect = values(p);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    zero_grads(params);
    std::vector<double> g(3);
    for (double& v : g) v = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < 3; ++i) p.grad_buffer()[i] = g[i];
    adam_step(params, st, 0.01);
    for (std::size_t i = 0; i < 3; ++i) expect[i] = ref[i].step(expect[i], g[i], 0.01);
  }
  CHECK(testsupport::max_abs_diff(values(p), expect) < 1e-12);
  CHECK(values(frozen) == std::vector<double>{1.0, 1.0});
  CHECK(st.t == 10);
  CHECK(st.m.at("p").size() == 3);

  Tensor q = Tensor::from_data({1}, {0.0}, true);
  AdamState s1;
  q.grad_buffer()[0] = 2.0;
  adam_step({{"q", q}}, s1, 0.01);
  CHECK(q.at(0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("crop draws are uniform over images and always in bounds") {
  ImageSet set;
  Rng gen(4);
  for (int i = 0; i < 4; ++i) set.add("i" + std::to_string(i), random_tensor({3, 40 + 8 * i, 48}, gen, 0, 1));
  Rng rng(5);
  std::map<std::size_t, int> counts;
  for (int k = 0; k < 1000; ++k) {
    CropDraw d = draw_crop(set, 32, rng);
    ++counts[d.index];
    const Tensor& img = set.image(d.index);
    CHECK(d.top + 32 <= img.size(1));
    CHECK(d.left + 32 <= img.size(2));
    if (k < 20) {
      Tensor c = take_crop(set, d, 32);
      CHECK(c.shape() == Shape{3, 32, 32});
      CHECK(c.at(0) == img.at(d.top * img.size(2) + d.left));
    }
  }
  REQUIRE(counts.size() == 4);
  for (auto [idx, n] : counts) {
    CHECK(n >= 190);
    CHECK(n <= 310);
  }
}

TEST_CASE("seeded batch sequences repeat") {
  auto data = testsupport::tiny_dataset(32, 6);
  Rng a(9), b(9);
  for (int k = 0; k < 5; ++k) {
    Batch x = draw_batch(data, 2, 32, a), y = draw_batch(data, 2, 32, b);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(values(x.low[i]) == values(y.low[i]));
      CHECK(values(x.normal[i]) == values(y.normal[i]));
    }
  }
}

TEST_CASE("dataset loading skips bad files and rejects empty sets") {
  testsupport::TempDir dir("dataset");
  std::filesystem::create_directories(dir / "low");
  write_ppm(dir / "low" / "a.ppm", ImageBuffer::blank(40, 40, 10));
  write_ppm(dir / "low" / "small.ppm", ImageBuffer::blank(16, 16, 10));
  std::ofstream(dir / "low" / "junk.ppm") << "not an image";
  std::vector<std::string> warnings;
  ImageSet s = ImageSet::load(dir / "low", 32, [&](const std::string& w) { warnings.push_back(w); });
  CHECK(s.size() == 1);
  CHECK(warnings.size() == 2);
  CHECK_THROWS_AS(ImageSet::load(dir / "missing", 32), DatasetError);
  CHECK_THROWS_AS(ImageSet::load(dir / "low", 64), DatasetError);
}

TEST_CASE("training steps are deterministic and w_luminance=0 drops the loop term") {
  auto gcfg = testsupport::tiny_generator(32);
  auto tcfg = testsupport::tiny_train(32, 3);
  Trainer a(gcfg, tcfg, testsupport::tiny_dataset(32, 1));
  Trainer b(gcfg, tcfg, testsupport::tiny_dataset(32, 1));
  for (int i = 0; i < 3; ++i) {
    StepRecord ra = a.step(), rb = b.step();
    CHECK(ra.total == rb.total);
    CHECK(ra.breakdown == rb.breakdown);
    CHECK(ra.breakdown.count("luminance") == 1);
    CHECK(std::isfinite(ra.total));
  }
  CHECK(a.state() == b.state());

  TrainConfig plain = tcfg;
  plain.weights.luminance = 0.0;
  Trainer c(gcfg, plain, testsupport::tiny_dataset(32, 1));
  StepRecord rc = c.step();
  CHECK(rc.breakdown.count("luminance") == 0);
  CHECK(log_row(rc).find("\t-\t") != std::string::npos);
}

TEST_CASE("generator and discriminator optimizer states stay disjoint") {
  auto gcfg = testsupport::tiny_generator(32);
  Trainer t(gcfg, testsupport::tiny_train(32, 2), testsupport::tiny_dataset(32, 2));
  t.step();
  const auto& s = t.state();
  const auto& nets = t.networks();
  auto names = [](const ParamList& p) {
    std::set<std::string> out;
    for (const auto& e : p) out.insert(e.name);
    return out;
  };
  auto keys = [](const AdamState& a) {
    std::set<std::string> out;
    for (const auto& [k, v] : a.m) out.insert(k);
    return out;
  };
  CHECK(keys(s.g_adam) == names(nets.generator.parameters()));
  CHECK(keys(s.d_global_adam) == names(nets.d_global.parameters()));
  CHECK(keys(s.d_local_adam) == names(nets.d_local.parameters()));
  for (const auto& g : nets.generator.parameters())
    for (const auto& d : nets.d_global.parameters()) CHECK_FALSE(g.tensor.same_node(d.tensor));
  CHECK(s.g_adam.t == 1);
  CHECK(s.d_global_adam.t == 1);
  CHECK(s.d_local_adam.t == 1);

  // a generator-only update leaves discriminator moments untouched
  const AdamState before = s.d_global_adam;
  ParamList gp = nets.generator.parameters();
  zero_grads(gp);
  sum(nets.generator(Tensor::full({3, 32, 32}, 0.3))).backward();
  AdamState g_copy = s.g_adam;
  adam_step(gp, g_copy, 1e-3);
  CHECK(t.state().d_global_adam == before);
}

TEST_CASE("fifty steps on a synthetic set lower the generator loss") {
  testsupport::TempDir dir("synth");
  write_synthetic_dataset(dir.path(), 48, 5);
  auto gcfg = testsupport::tiny_generator(32);
  TrainConfig tcfg = testsupport::tiny_train(32, 50);
  tcfg.lr_init = 5e-4;
  tcfg.batch_size = 2;
  tcfg.low_dir = dir / "low";
  tcfg.normal_dir = dir / "normal";
  Trainer t(gcfg, tcfg, Dataset::load(tcfg));
  std::vector<double> totals;
  t.run([&](const StepRecord& r) { totals.push_back(r.total); });
  REQUIRE(totals.size() == 50);
  MESSAGE("step 1 " << totals.front() << ", step 50 " << totals.back());
  CHECK(totals.back() < totals.front());
}

TEST_CASE("log format") {
  StepRecord r;
  r.step = 3;
  r.lr = 5e-5;
  r.d_loss = 1.25;
  r.breakdown = {{"adv_global", 0.5}, {"sfp", 0.25}};
  r.total = 0.75;
  CHECK(log_header() == "step\tlr\td_loss\tadv_global\tadv_local\tsfp\tidentity\tluminance\ttotal");
  CHECK(log_row(r) == "3\t5e-05\t1.25\t0.5\t-\t0.25\t-\t-\t0.75");
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.crop_size = 60;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.crop_size = 64;
  c.lr_init = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
