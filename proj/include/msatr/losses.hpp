#pragma once

// Training objectives: luminance consistency, dual adversarial,
// self-feature preserving, and identity invariant, plus their weighted sum.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "msatr/params.hpp"
#include "msatr/tensor.hpp"

namespace msatr {

struct LossWeights {
  double adv_global = 1.0;
  double adv_local = 1.0;
  double sfp = 1.0;
  double identity = 0.5;
  double luminance = 1.0;

  // ConfigError unless every weight is finite and >= 0.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

enum class AdversarialForm {
  // Generator minimizes -log D(x_f).
  NonSaturating,
  // Generator minimizes -log(1 - D(x_f)), the literal printed objective.
  Printed,
};

enum class IdentityNorm {
  // mean((G(x_r) - x_r)^2)
  SquaredMean,
  // ||G(x_r) - x_r||_2
  L2,
};

struct LossOptions {
  AdversarialForm adversarial = AdversarialForm::NonSaturating;
  IdentityNorm identity_norm = IdentityNorm::SquaredMean;
  // Divide the luminance term additionally by the mixing coefficient.
  bool luminance_alpha_weighted = false;
  bool operator==(const LossOptions&) const = default;
};

struct Region {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const Region&) const = default;
};

// Mean squared difference between the re-enhanced image `restored` and the
// first-pass `enhanced` image over `region`, across all channels:
// sum((I-K)^2) / (m*n*C). With `alpha`, the sum is further divided by alpha.
Tensor luminance_consistency_loss(const Tensor& restored, const Tensor& enhanced, const Region& region,
                                  std::optional<double> alpha = std::nullopt);

struct AdversarialLosses {
  Tensor d_loss;  // -[log s(real) + log(1 - s(fake))], each side averaged over its logits
  Tensor g_loss;
};

// logits_real / logits_fake hold one or more logits (e.g. one per patch).
AdversarialLosses adversarial_losses(const Tensor& logits_real, const Tensor& logits_fake,
                                     AdversarialForm form = AdversarialForm::NonSaturating);
// Just the generator side; no real logits needed.
Tensor generator_adversarial_loss(const Tensor& logits_fake, AdversarialForm form = AdversarialForm::NonSaturating);

// Frozen random conv pyramid standing in for a pretrained perceptual network:
// three 3x3 stride-2 convs (3 -> 8 -> 16 -> 32) with relu. Kaiming-uniform
// weights drawn once from kFeatureExtractorSeed; never trained.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kFeatureExtractorSeed = 0x4D5341545200ULL;  // "MSATR\0"
  static constexpr std::size_t kLayers = 3;

  FeatureExtractor();
  std::array<Tensor, kLayers> features(const Tensor& x) const;
  const std::array<ConvParams, kLayers>& layers() const { return layers_; }

 private:
  std::array<ConvParams, kLayers> layers_;
};

// (1/N_l) * sum_i rms(phi_i(x_enh) - phi_i(x_low)), where rms(v) = ||v||_2 / sqrt(numel).
Tensor self_feature_preserving_loss(const Tensor& x_low, const Tensor& x_enh, const FeatureExtractor& fe);

// Distance between G(x_r) and x_r.
Tensor identity_invariant_loss(const Tensor& x_r, const Tensor& g_out,
                               IdentityNorm norm = IdentityNorm::SquaredMean);

struct LossParts {
  Tensor adv_global;
  Tensor adv_local;
  Tensor sfp;
  Tensor identity;
  Tensor luminance;
};

struct WeightedLoss {
  Tensor total;
  // Weighted value per present term, keyed adv_global/adv_local/sfp/identity/luminance.
  std::map<std::string, double> breakdown;
};

// Weighted sum over the defined parts. Terms with zero weight or no tensor
// are left out of both the sum and the breakdown. A non-finite part raises
// DivergenceError naming it.
WeightedLoss total_generator_loss(const LossParts& parts, const LossWeights& w, long long step = -1);

}  // namespace msatr
