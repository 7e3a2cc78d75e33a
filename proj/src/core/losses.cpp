#include "msatr/losses.hpp"

#include <cmath>

#include "msatr/errors.hpp"

namespace msatr {

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"w_adv_global", adv_global},
                                                {"w_adv_local", adv_local},
                                                {"w_sfp", sfp},
                                                {"w_identity", identity},
                                                {"w_luminance", luminance}};
  for (auto [name, v] : all) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + " must be finite and >= 0");
  }
}

Tensor luminance_consistency_loss(const Tensor& restored, const Tensor& enhanced, const Region& region,
                                  std::optional<double> alpha) {
  if (restored.shape() != enhanced.shape()) {
    throw ContractError("luminance_consistency_loss: shapes differ " + shape_to_string(restored.shape()) + " vs " +
                        shape_to_string(enhanced.shape()));
  }
  if (region.height == 0 || region.width == 0) throw ContractError("luminance_consistency_loss: empty region");
  if (restored.ndim() != 3 || region.top + region.height > restored.size(1) ||
      region.left + region.width > restored.size(2)) {
    throw ContractError("luminance_consistency_loss: region outside image " + shape_to_string(restored.shape()));
  }
  const Tensor diff = sub(crop(restored, region.top, region.left, region.height, region.width),
                          crop(enhanced, region.top, region.left, region.height, region.width));
  Tensor loss = mean(square(diff));
  if (alpha) {
    if (!(*alpha > 0.0)) throw ContractError("luminance_consistency_loss: alpha must be positive");
    loss = scale(loss, 1.0 / *alpha);
  }
  return loss;
}

Tensor generator_adversarial_loss(const Tensor& logits_fake, AdversarialForm form) {
  // -log s(f) = softplus(-f); -log(1 - s(f)) = softplus(f)
  return form == AdversarialForm::NonSaturating ? mean(softplus(scale(logits_fake, -1.0))) : mean(softplus(logits_fake));
}

AdversarialLosses adversarial_losses(const Tensor& logits_real, const Tensor& logits_fake, AdversarialForm form) {
  AdversarialLosses out;
  out.d_loss = add(mean(softplus(scale(logits_real, -1.0))), mean(softplus(logits_fake)));
  out.g_loss = generator_adversarial_loss(logits_fake, form);
  return out;
}

FeatureExtractor::FeatureExtractor() {
  Rng rng(kFeatureExtractorSeed);
  constexpr std::array<std::size_t, 4> channels = {3, 8, 16, 32};
  for (std::size_t i = 0; i < kLayers; ++i) {
    const std::size_t fan_in = channels[i] * 9;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    layers_[i].weight = init_uniform({channels[i + 1], channels[i], 3, 3}, bound, rng, /*requires_grad=*/false);
    layers_[i].bias = Tensor::zeros({channels[i + 1]});
  }
}

std::array<Tensor, FeatureExtractor::kLayers> FeatureExtractor::features(const Tensor& x) const {
  std::array<Tensor, kLayers> out;
  Tensor h = x;
  for (std::size_t i = 0; i < kLayers; ++i) {
    h = relu(conv2d(h, layers_[i].weight, layers_[i].bias, 2, 1));
    out[i] = h;
  }
  return out;
}

Tensor self_feature_preserving_loss(const Tensor& x_low, const Tensor& x_enh, const FeatureExtractor& fe) {
  if (x_low.shape() != x_enh.shape()) {
    throw ContractError("self_feature_preserving_loss: shapes differ " + shape_to_string(x_low.shape()) + " vs " +
                        shape_to_string(x_enh.shape()));
  }
  const auto a = fe.features(x_enh);
  const auto b = fe.features(x_low);
  Tensor total;
  for (std::size_t i = 0; i < FeatureExtractor::kLayers; ++i) {
    const Tensor rms = sqrt(mean(square(sub(a[i], b[i]))));
    total = total.defined() ? add(total, rms) : rms;
  }
  return scale(total, 1.0 / static_cast<double>(FeatureExtractor::kLayers));
}

Tensor identity_invariant_loss(const Tensor& x_r, const Tensor& g_out, IdentityNorm norm) {
  if (x_r.shape() != g_out.shape()) {
    throw ContractError("identity_invariant_loss: shapes differ " + shape_to_string(x_r.shape()) + " vs " +
                        shape_to_string(g_out.shape()));
  }
  const Tensor sq = square(sub(g_out, x_r));
  return norm == IdentityNorm::SquaredMean ? mean(sq) : sqrt(sum(sq));
}

WeightedLoss total_generator_loss(const LossParts& parts, const LossWeights& w, long long step) {
  w.validate();
  const std::pair<const char*, std::pair<const Tensor*, double>> terms[] = {
      {"adv_global", {&parts.adv_global, w.adv_global}}, {"adv_local", {&parts.adv_local, w.adv_local}},
      {"sfp", {&parts.sfp, w.sfp}},                      {"identity", {&parts.identity, w.identity}},
      {"luminance", {&parts.luminance, w.luminance}},
  };
  WeightedLoss out;
  for (const auto& [name, tw] : terms) {
    const auto [t, weight] = tw;
    if (!t->defined() || weight == 0.0) continue;
    const double v = t->item();
    if (!std::isfinite(v)) throw DivergenceError(name, step);
    const Tensor term = scale(*t, weight);
    out.breakdown[name] = term.item();
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  if (!out.total.defined()) out.total = Tensor::scalar(0.0);
  return out;
}

}  // namespace msatr
