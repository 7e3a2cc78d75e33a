#include "msatr/discriminator.hpp"

#include "msatr/errors.hpp"
#include "msatr/window_ops.hpp"

namespace msatr {

namespace {

constexpr std::array<std::size_t, 4> kChannels = {3, 16, 32, 64};

std::size_t halved(std::size_t v) { return (v + 1) / 2; }  // 3x3, stride 2, pad 1

}  // namespace

Discriminator Discriminator::create(std::size_t input_height, std::size_t input_width, std::uint64_t seed) {
  if (input_height < 8 || input_width < 8) {
    throw ConfigError("discriminator input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                      " is smaller than 8x8");
  }
  Rng rng(seed);
  DiscriminatorWeights w;
  w.input_height = input_height;
  w.input_width = input_width;
  for (std::size_t i = 0; i < 3; ++i) w.convs[i] = init_conv(kChannels[i + 1], kChannels[i], 3, 3, rng);
  const std::size_t fh = halved(halved(halved(input_height)));
  const std::size_t fw = halved(halved(halved(input_width)));
  w.head = init_linear(kChannels[3] * fh * fw, 1, rng);
  return Discriminator(std::move(w));
}

Tensor Discriminator::logit(const Tensor& x) const {
  if (x.ndim() != 3 || x.size(0) != 3 || x.size(1) != w_.input_height || x.size(2) != w_.input_width) {
    throw ConfigError("discriminator expects a 3x" + std::to_string(w_.input_height) + "x" +
                      std::to_string(w_.input_width) + " input, got " + shape_to_string(x.shape()));
  }
  Tensor h = x;
  for (const auto& c : w_.convs) h = leaky_relu(conv2d(h, c.weight, c.bias, 2, 1), kLeakySlope);
  h = reshape(h, {1, h.numel()});
  return reshape(linear(h, w_.head.weight, w_.head.bias), {1});
}

ParamList Discriminator::parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < w_.convs.size(); ++i) collect(out, "conv" + std::to_string(i), w_.convs[i]);
  collect(out, "head", w_.head);
  return out;
}

Tensor discriminate_global(const Discriminator& d, const Tensor& x) { return d.logit(x); }

std::vector<std::pair<std::size_t, std::size_t>> sample_patch_offsets(std::size_t height, std::size_t width,
                                                                      std::size_t patch, std::size_t count, Rng& rng) {
  if (patch == 0 || patch > height || patch > width) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not fit a " + std::to_string(height) + "x" +
                      std::to_string(width) + " image");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t top = rng.uniform_int(0, height - patch);
    const std::size_t left = rng.uniform_int(0, width - patch);
    out.emplace_back(top, left);
  }
  return out;
}

std::vector<PatchScore> discriminate_patches(const Discriminator& d, const Tensor& x,
                                             const std::vector<std::pair<std::size_t, std::size_t>>& offsets) {
  if (d.input_height() != d.input_width()) throw ConfigError("local discriminator must take square patches");
  const std::size_t p = d.input_height();
  std::vector<PatchScore> out;
  out.reserve(offsets.size());
  for (auto [top, left] : offsets) {
    PatchScore s;
    s.top = top;
    s.left = left;
    s.patch = crop(x, top, left, p, p);
    s.logit = d.logit(s.patch);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PatchScore> discriminate_local(const Discriminator& d, const Tensor& x, Rng& rng, std::size_t count) {
  if (x.ndim() != 3) throw ConfigError("discriminate_local: expected [3,H,W], got " + shape_to_string(x.shape()));
  const auto offsets = sample_patch_offsets(x.size(1), x.size(2), d.input_height(), count, rng);
  return discriminate_patches(d, x, offsets);
}

}  // namespace msatr
