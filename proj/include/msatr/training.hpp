#pragma once

// Unpaired dataset sampling, region mixing, Adam, and the adversarial
// consistency-loop trainer.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msatr/discriminator.hpp"
#include "msatr/generator.hpp"
#include "msatr/losses.hpp"
#include "msatr/rng.hpp"

namespace msatr {

struct TrainConfig {
  double lr_init = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t crop_size = 64;
  std::size_t batch_size = 4;
  std::size_t total_steps = 500;
  std::uint64_t seed = 1;
  std::size_t local_patches = kDefaultLocalPatches;
  // 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  LossWeights weights;
  LossOptions options;
  std::filesystem::path low_dir;
  std::filesystem::path normal_dir;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// lr_init for step < total/2, then linear down to 0 at step == total.
double learning_rate(const TrainConfig& cfg, std::size_t step);

struct MixResult {
  Tensor mixed;
  Region region;
  double alpha = 0.0;
};

// Region sides uniform in [ceil(H/4), floor(3H/4)] (likewise W), offset
// uniform over valid positions, alpha ~ U(0,1). Draw order: height, width,
// top, left, alpha.
MixResult mix_images(const Tensor& input, const Tensor& output, Rng& rng);
// alpha * output + (1 - alpha) * input inside region, input elsewhere.
Tensor mix_region(const Tensor& input, const Tensor& output, const Region& region, double alpha);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments for one parameter set, keyed by parameter name.
struct AdamState {
  long long t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam update of every parameter from its accumulated grad.
// Parameters without a gradient are treated as having a zero gradient.
void adam_step(const ParamList& params, AdamState& state, double lr, const AdamConfig& cfg = {});

// Images from one directory held as [3,H,W] tensors.
class ImageSet {
 public:
  // Files that fail to decode or are smaller than min_side are skipped and
  // reported through `warn`. DatasetError if nothing usable remains.
  static ImageSet load(const std::filesystem::path& dir, std::size_t min_side,
                       const std::function<void(const std::string&)>& warn = {});

  std::size_t size() const { return images_.size(); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  void add(std::string name, Tensor image);

 private:
  std::vector<Tensor> images_;
  std::vector<std::string> names_;
};

struct CropDraw {
  std::size_t index = 0;
  std::size_t top = 0;
  std::size_t left = 0;
};

// Uniform image choice, then uniform crop offset (top, then left).
CropDraw draw_crop(const ImageSet& set, std::size_t crop, Rng& rng);
Tensor take_crop(const ImageSet& set, const CropDraw& d, std::size_t crop);

// Two unpaired streams.
struct Dataset {
  ImageSet low;
  ImageSet normal;

  static Dataset load(const TrainConfig& cfg, const std::function<void(const std::string&)>& warn = {});
};

struct Batch {
  std::vector<Tensor> low;
  std::vector<Tensor> normal;
};

// Per sample: a low crop then a normal crop.
Batch draw_batch(const Dataset& data, std::size_t batch_size, std::size_t crop, Rng& rng);

struct StepRecord {
  std::size_t step = 0;  // 1-based index of the completed step
  double lr = 0.0;
  double d_loss = 0.0;
  std::map<std::string, double> breakdown;  // batch-mean weighted terms
  double total = 0.0;
};

// Header and row of the tab-separated training log; absent terms print "-".
std::string log_header();
std::string log_row(const StepRecord& r);

struct TrainState {
  std::size_t step = 0;
  Rng rng;
  AdamState g_adam;
  AdamState d_global_adam;
  AdamState d_local_adam;
  double last_total = 0.0;
  double best_total = 0.0;
  std::size_t best_step = 0;
  bool operator==(const TrainState&) const = default;
};

struct Networks {
  Generator generator;
  Discriminator d_global;
  Discriminator d_local;
};

// Fresh networks for a run: generator, global and local discriminators seeded
// from successive draws of Rng(seed); the fourth draw seeds the sampling Rng.
Networks init_networks(const GeneratorConfig& gcfg, const TrainConfig& tcfg, Rng& sampling);

class Trainer {
 public:
  Trainer(GeneratorConfig gcfg, TrainConfig tcfg, Dataset data);
  // Continues from a saved state with the given networks.
  Trainer(Networks nets, TrainConfig tcfg, TrainState state, Dataset data);

  // One consistency-loop step on a freshly drawn batch; ContractError once
  // total_steps have been taken.
  StepRecord step();
  // One step on the given batch (for tests).
  StepRecord step_on(const Batch& batch);
  // Steps until state().step == total_steps (or `until`, if smaller).
  void run(const std::function<void(const StepRecord&)>& on_step = {}, std::optional<std::size_t> until = {});

  const Networks& networks() const { return nets_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return tcfg_; }
  const Dataset& data() const { return data_; }

 private:
  TrainConfig tcfg_;
  TrainState state_;
  Networks nets_;
  Dataset data_;
  FeatureExtractor features_;
};

}  // namespace msatr
