#include "msatr/training.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

#include "msatr/errors.hpp"
#include "msatr/image.hpp"

namespace msatr {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr_init > 0.0) || !std::isfinite(lr_init)) fail("lr_init must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("beta1/beta2 must lie in [0,1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (crop_size == 0 || crop_size % 8 != 0) fail("crop_size " + std::to_string(crop_size) + " must be a positive multiple of 8");
  if (crop_size < 32) fail("crop_size must be at least 32 so local patches are 8x8 or larger");
  if (batch_size == 0) fail("batch_size must be positive");
  if (total_steps == 0) fail("total_steps must be positive");
  if (local_patches == 0) fail("local_patches must be positive");
  weights.validate();
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  const double total = static_cast<double>(cfg.total_steps);
  const double half = total / 2.0;
  const double s = static_cast<double>(step);
  if (s < half) return cfg.lr_init;
  if (s >= total) return 0.0;
  return cfg.lr_init * (total - s) / (total - half);
}

Tensor mix_region(const Tensor& input, const Tensor& output, const Region& region, double alpha) {
  if (input.shape() != output.shape()) {
    throw ContractError("mix_images: shapes differ " + shape_to_string(input.shape()) + " vs " +
                        shape_to_string(output.shape()));
  }
  if (input.ndim() != 3) throw ContractError("mix_images: expected [C,H,W], got " + shape_to_string(input.shape()));
  const std::size_t c = input.size(0), h = input.size(1), w = input.size(2);
  if (region.top + region.height > h || region.left + region.width > w) {
    throw ContractError("mix_images: region outside the image");
  }
  auto in = input.data();
  auto out = output.data();
  std::vector<double> mixed(in.begin(), in.end());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = region.top; y < region.top + region.height; ++y) {
      for (std::size_t x = region.left; x < region.left + region.width; ++x) {
        const std::size_t i = (ch * h + y) * w + x;
        mixed[i] = alpha * out[i] + (1.0 - alpha) * in[i];
      }
    }
  }
  return Tensor::from_data(input.shape(), std::move(mixed));
}

MixResult mix_images(const Tensor& input, const Tensor& output, Rng& rng) {
  if (input.shape() != output.shape()) {
    throw ContractError("mix_images: shapes differ " + shape_to_string(input.shape()) + " vs " +
                        shape_to_string(output.shape()));
  }
  if (input.ndim() != 3) throw ContractError("mix_images: expected [C,H,W], got " + shape_to_string(input.shape()));
  const std::size_t h = input.size(1), w = input.size(2);
  auto side = [&](std::size_t n) {
    const std::size_t lo = std::max<std::size_t>(1, (n + 3) / 4);
    const std::size_t hi = std::max(lo, 3 * n / 4);
    return rng.uniform_int(lo, hi);
  };
  MixResult r;
  r.region.height = side(h);
  r.region.width = side(w);
  r.region.top = rng.uniform_int(0, h - r.region.height);
  r.region.left = rng.uniform_int(0, w - r.region.width);
  r.alpha = rng.uniform();
  r.mixed = mix_region(input, output, r.region, r.alpha);
  return r;
}

void adam_step(const ParamList& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("adam_step: learning rate must be finite and >= 0");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, tensor] : params) {
    Tensor p = tensor;
    const std::size_t n = p.numel();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    if (m.size() != n || v.size() != n) throw ContractError("adam_step: moment size mismatch for " + name);
    auto values = p.mutable_data();
    const bool has = p.has_grad();
    std::span<const double> g = has ? p.grad() : std::span<const double>{};
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void ImageSet::add(std::string name, Tensor image) {
  names_.push_back(std::move(name));
  images_.push_back(std::move(image));
}

ImageSet ImageSet::load(const std::filesystem::path& dir, std::size_t min_side,
                        const std::function<void(const std::string&)>& warn) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DatasetError("dataset directory not found: " + dir.string());
  ImageSet set;
  for (const auto& path : list_files(dir)) {
    try {
      const ImageBuffer img = read_ppm(path);
      if (img.width < min_side || img.height < min_side) {
        if (warn) {
          warn("skipping " + path.string() + ": " + std::to_string(img.width) + "x" + std::to_string(img.height) +
               " is smaller than the " + std::to_string(min_side) + " crop");
        }
        continue;
      }
      set.add(path.filename().string(), to_tensor(img));
    } catch (const IoError& e) {
      if (warn) warn(std::string("skipping ") + e.what());
    }
  }
  if (set.size() == 0) throw DatasetError("no usable images of at least " + std::to_string(min_side) + "x" +
                                          std::to_string(min_side) + " in " + dir.string());
  return set;
}

CropDraw draw_crop(const ImageSet& set, std::size_t crop, Rng& rng) {
  CropDraw d;
  d.index = rng.uniform_index(set.size());
  const Tensor& img = set.image(d.index);
  d.top = rng.uniform_int(0, img.size(1) - crop);
  d.left = rng.uniform_int(0, img.size(2) - crop);
  return d;
}

Tensor take_crop(const ImageSet& set, const CropDraw& d, std::size_t crop) {
  NoGradGuard guard;
  return msatr::crop(set.image(d.index), d.top, d.left, crop, crop).detach();
}

Dataset Dataset::load(const TrainConfig& cfg, const std::function<void(const std::string&)>& warn) {
  return {ImageSet::load(cfg.low_dir, cfg.crop_size, warn), ImageSet::load(cfg.normal_dir, cfg.crop_size, warn)};
}

Batch draw_batch(const Dataset& data, std::size_t batch_size, std::size_t crop, Rng& rng) {
  Batch b;
  for (std::size_t i = 0; i < batch_size; ++i) {
    b.low.push_back(take_crop(data.low, draw_crop(data.low, crop, rng), crop));
    b.normal.push_back(take_crop(data.normal, draw_crop(data.normal, crop, rng), crop));
  }
  return b;
}

namespace {

const char* const kTermOrder[] = {"adv_global", "adv_local", "sfp", "identity", "luminance"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

Tensor patch_logits(const Discriminator& d, const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  std::vector<Tensor> logits;
  for (auto& s : discriminate_patches(d, x, at)) logits.push_back(s.logit);
  return logits.size() == 1 ? logits.front() : concat(logits, 0);
}

}  // namespace

std::string log_header() {
  std::string h = "step\tlr\td_loss";
  for (const char* t : kTermOrder) h += std::string("\t") + t;
  return h + "\ttotal";
}

std::string log_row(const StepRecord& r) {
  std::string row = std::to_string(r.step) + "\t" + fmt(r.lr) + "\t" + fmt(r.d_loss);
  for (const char* t : kTermOrder) {
    auto it = r.breakdown.find(t);
    row += "\t" + (it == r.breakdown.end() ? std::string("-") : fmt(it->second));
  }
  return row + "\t" + fmt(r.total);
}

Networks init_networks(const GeneratorConfig& gcfg, const TrainConfig& tcfg, Rng& sampling) {
  Rng seeder(tcfg.seed);
  const std::uint64_t g_seed = seeder.next_u64();
  const std::uint64_t dg_seed = seeder.next_u64();
  const std::uint64_t dl_seed = seeder.next_u64();
  sampling = Rng(seeder.next_u64());
  const std::size_t patch = tcfg.crop_size / 4;
  return {Generator::create(gcfg, g_seed), Discriminator::create(tcfg.crop_size, tcfg.crop_size, dg_seed),
          Discriminator::create(patch, patch, dl_seed)};
}

namespace {

Networks init_for(const GeneratorConfig& gcfg, const TrainConfig& tcfg, TrainState& state) {
  tcfg.validate();
  if (gcfg.height != tcfg.crop_size || gcfg.width != tcfg.crop_size) {
    throw ConfigError("generator resolution " + std::to_string(gcfg.height) + "x" + std::to_string(gcfg.width) +
                      " differs from crop_size " + std::to_string(tcfg.crop_size));
  }
  return init_networks(gcfg, tcfg, state.rng);
}

}  // namespace

Trainer::Trainer(GeneratorConfig gcfg, TrainConfig tcfg, Dataset data)
    : tcfg_(std::move(tcfg)), nets_(init_for(gcfg, tcfg_, state_)), data_(std::move(data)) {}

Trainer::Trainer(Networks nets, TrainConfig tcfg, TrainState state, Dataset data)
    : tcfg_(std::move(tcfg)), state_(std::move(state)), nets_(std::move(nets)), data_(std::move(data)) {
  tcfg_.validate();
}

StepRecord Trainer::step() {
  if (state_.step >= tcfg_.total_steps) {
    throw ContractError("training already finished (" + std::to_string(tcfg_.total_steps) + " steps)");
  }
  const Batch batch = draw_batch(data_, tcfg_.batch_size, tcfg_.crop_size, state_.rng);
  return step_on(batch);
}

StepRecord Trainer::step_on(const Batch& batch) {
  const std::size_t n = batch.low.size();
  if (n == 0 || batch.normal.size() != n) throw ContractError("training step needs matching non-empty batches");
  const LossWeights& w = tcfg_.weights;
  const LossOptions& opt = tcfg_.options;
  const std::size_t step_no = state_.step + 1;
  const double inv = 1.0 / static_cast<double>(n);
  const AdamConfig adam{tcfg_.beta1, tcfg_.beta2, tcfg_.eps};
  const bool use_global = w.adv_global > 0.0;
  const bool use_local = w.adv_local > 0.0;
  const bool use_loop = w.luminance > 0.0;
  const std::size_t patch = nets_.d_local.input_height();

  StepRecord rec;
  rec.step = step_no;
  rec.lr = learning_rate(tcfg_, state_.step);

  // First pass and loop mixing.
  std::vector<Tensor> enhanced(n);
  std::vector<MixResult> mixes(n);
  for (std::size_t i = 0; i < n; ++i) {
    enhanced[i] = nets_.generator(batch.low[i]);
    if (use_loop) mixes[i] = mix_images(batch.low[i], enhanced[i].detach(), state_.rng);
  }

  // Discriminator update on first-pass outputs.
  const ParamList dg_params = nets_.d_global.parameters();
  const ParamList dl_params = nets_.d_local.parameters();
  zero_grads(dg_params);
  zero_grads(dl_params);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> fake_offsets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor fake = enhanced[i].detach();
    const Tensor& real = batch.normal[i];
    Tensor d_loss;
    if (use_global) {
      d_loss = adversarial_losses(nets_.d_global.logit(real), nets_.d_global.logit(fake), opt.adversarial).d_loss;
    }
    if (use_local) {
      const auto real_at = sample_patch_offsets(real.size(1), real.size(2), patch, tcfg_.local_patches, state_.rng);
      fake_offsets[i] = sample_patch_offsets(fake.size(1), fake.size(2), patch, tcfg_.local_patches, state_.rng);
      const Tensor l = adversarial_losses(patch_logits(nets_.d_local, real, real_at),
                                          patch_logits(nets_.d_local, fake, fake_offsets[i]), opt.adversarial)
                           .d_loss;
      d_loss = d_loss.defined() ? add(d_loss, l) : l;
    }
    if (!d_loss.defined()) continue;
    const double v = d_loss.item();
    if (!std::isfinite(v)) throw DivergenceError("d_loss", static_cast<long long>(step_no));
    rec.d_loss += v * inv;
    scale(d_loss, inv).backward();
  }
  if (use_global) adam_step(dg_params, state_.d_global_adam, rec.lr, adam);
  if (use_local) adam_step(dl_params, state_.d_local_adam, rec.lr, adam);

  // Generator update.
  const ParamList g_params = nets_.generator.parameters();
  zero_grads(g_params);
  for (std::size_t i = 0; i < n; ++i) {
    LossParts parts;
    if (use_global) parts.adv_global = generator_adversarial_loss(nets_.d_global.logit(enhanced[i]), opt.adversarial);
    if (use_local) {
      parts.adv_local =
          generator_adversarial_loss(patch_logits(nets_.d_local, enhanced[i], fake_offsets[i]), opt.adversarial);
    }
    if (w.sfp > 0.0) parts.sfp = self_feature_preserving_loss(batch.low[i], enhanced[i], features_);
    if (w.identity > 0.0) {
      parts.identity = identity_invariant_loss(batch.normal[i], nets_.generator(batch.normal[i]), opt.identity_norm);
    }
    if (use_loop) {
      const Tensor again = nets_.generator(mixes[i].mixed);
      parts.luminance = luminance_consistency_loss(
          again, enhanced[i].detach(), mixes[i].region,
          opt.luminance_alpha_weighted ? std::optional<double>(mixes[i].alpha) : std::nullopt);
    }
    const WeightedLoss wl = total_generator_loss(parts, w, static_cast<long long>(step_no));
    for (const auto& [k, v] : wl.breakdown) rec.breakdown[k] += v * inv;
    rec.total += wl.total.item() * inv;
    if (wl.total.requires_grad()) scale(wl.total, inv).backward();
    enhanced[i] = Tensor();
  }
  adam_step(g_params, state_.g_adam, rec.lr, adam);

  state_.step = step_no;
  state_.last_total = rec.total;
  if (state_.best_step == 0 || rec.total < state_.best_total) {
    state_.best_total = rec.total;
    state_.best_step = step_no;
  }
  return rec;
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step, std::optional<std::size_t> until) {
  const std::size_t stop = std::min(tcfg_.total_steps, until.value_or(tcfg_.total_steps));
  while (state_.step < stop) {
    const StepRecord r = step();
    if (on_step) on_step(r);
  }
}

}  // namespace msatr
