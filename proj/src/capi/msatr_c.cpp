#include "msatr/msatr.h"

#include <new>
#include <string>

#include "msatr/checkpoint.hpp"
#include "msatr/config.hpp"
#include "msatr/errors.hpp"
#include "msatr/evaluate.hpp"
#include "msatr/selfcheck.hpp"
#include "msatr/synthetic.hpp"

using namespace msatr;

struct msatr_config {
  RunConfig run;
  std::string text;
};

struct msatr_trainer {
  Trainer trainer;
};

struct msatr_model {
  Generator generator;
};

struct msatr_image {
  ImageBuffer image;
};

struct msatr_report {
  EvalReport report;
  std::string tsv;
  std::string summary;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_log_row;

msatr_status status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return MSATR_ERR_DIMENSION;
    case ErrorKind::Domain: return MSATR_ERR_DOMAIN;
    case ErrorKind::Contract: return MSATR_ERR_CONTRACT;
    case ErrorKind::Config: return MSATR_ERR_CONFIG;
    case ErrorKind::Partition: return MSATR_ERR_PARTITION;
    case ErrorKind::Checkpoint: return MSATR_ERR_CHECKPOINT;
    case ErrorKind::Dataset: return MSATR_ERR_DATASET;
    case ErrorKind::Divergence: return MSATR_ERR_DIVERGENCE;
    case ErrorKind::Io: return MSATR_ERR_IO;
  }
  return MSATR_ERR_INTERNAL;
}

template <class F>
msatr_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MSATR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MSATR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSATR_ERR_INTERNAL;
  }
}

msatr_status invalid(const char* what) {
  g_last_error = what;
  return MSATR_ERR_INVALID_ARGUMENT;
}

std::function<void(const std::string&)> warner(msatr_message_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& m) { fn(m.c_str(), user); };
}

StepRecord to_record(const msatr_step_record& r) {
  StepRecord out;
  out.step = r.step;
  out.lr = r.lr;
  out.d_loss = r.d_loss;
  out.total = r.total;
  const char* names[] = {"adv_global", "adv_local", "sfp", "identity", "luminance"};
  const double values[] = {r.adv_global, r.adv_local, r.sfp, r.identity, r.luminance};
  for (unsigned i = 0; i < 5; ++i) {
    if (r.present & (1u << i)) out.breakdown[names[i]] = values[i];
  }
  return out;
}

msatr_step_record from_record(const StepRecord& r) {
  msatr_step_record out{};
  out.step = r.step;
  out.lr = r.lr;
  out.d_loss = r.d_loss;
  out.total = r.total;
  const char* names[] = {"adv_global", "adv_local", "sfp", "identity", "luminance"};
  double* slots[] = {&out.adv_global, &out.adv_local, &out.sfp, &out.identity, &out.luminance};
  for (unsigned i = 0; i < 5; ++i) {
    auto it = r.breakdown.find(names[i]);
    if (it == r.breakdown.end()) continue;
    *slots[i] = it->second;
    out.present |= 1u << i;
  }
  return out;
}

}  // namespace

extern "C" {

const char* msatr_version(void) { return "1.0.0"; }

const char* msatr_status_name(msatr_status s) {
  switch (s) {
    case MSATR_OK: return "ok";
    case MSATR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MSATR_ERR_DIMENSION: return "dimension error";
    case MSATR_ERR_DOMAIN: return "domain error";
    case MSATR_ERR_CONTRACT: return "contract error";
    case MSATR_ERR_CONFIG: return "config error";
    case MSATR_ERR_PARTITION: return "partition error";
    case MSATR_ERR_CHECKPOINT: return "checkpoint error";
    case MSATR_ERR_DATASET: return "dataset error";
    case MSATR_ERR_DIVERGENCE: return "divergence";
    case MSATR_ERR_IO: return "i/o error";
    case MSATR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* msatr_last_error(void) { return g_last_error.c_str(); }

msatr_status msatr_config_default(msatr_config** out) {
  if (!out) return invalid("out is NULL");
  return guarded([&] {
    auto* c = new msatr_config;
    c->run.finalize();
    *out = c;
  });
}

msatr_status msatr_config_load(const char* path, msatr_config** out) {
  if (!path || !out) return invalid("path and out must not be NULL");
  return guarded([&] { *out = new msatr_config{RunConfig::load(path), {}}; });
}

msatr_status msatr_config_set(msatr_config* cfg, const char* assignment) {
  if (!cfg || !assignment) return invalid("cfg and assignment must not be NULL");
  return guarded([&] {
    RunConfig copy = cfg->run;
    copy.set(assignment);
    cfg->run = std::move(copy);
  });
}

const char* msatr_config_text(msatr_config* cfg) {
  if (!cfg) return "";
  cfg->text = cfg->run.to_text();
  return cfg->text.c_str();
}

size_t msatr_config_total_steps(const msatr_config* cfg) { return cfg ? cfg->run.train.total_steps : 0; }
size_t msatr_config_checkpoint_every(const msatr_config* cfg) { return cfg ? cfg->run.train.checkpoint_every : 0; }
void msatr_config_free(msatr_config* cfg) { delete cfg; }

msatr_status msatr_trainer_create(const msatr_config* cfg, msatr_message_fn warn, void* user, msatr_trainer** out) {
  if (!cfg || !out) return invalid("cfg and out must not be NULL");
  return guarded([&] {
    Dataset data = Dataset::load(cfg->run.train, warner(warn, user));
    *out = new msatr_trainer{Trainer(cfg->run.generator, cfg->run.train, std::move(data))};
  });
}

msatr_status msatr_trainer_resume(const char* checkpoint_path, msatr_message_fn warn, void* user, msatr_trainer** out) {
  if (!checkpoint_path || !out) return invalid("checkpoint_path and out must not be NULL");
  return guarded([&] {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (!ckpt.train) throw CheckpointError("checkpoint: " + std::string(checkpoint_path) + " holds no training state", 0);
    Dataset data = Dataset::load(ckpt.train->config, warner(warn, user));
    *out = new msatr_trainer{restore_trainer(ckpt, std::move(data))};
  });
}

msatr_status msatr_trainer_step(msatr_trainer* t, msatr_step_record* record) {
  if (!t) return invalid("trainer is NULL");
  return guarded([&] {
    const StepRecord r = t->trainer.step();
    if (record) *record = from_record(r);
  });
}

size_t msatr_trainer_current_step(const msatr_trainer* t) { return t ? t->trainer.state().step : 0; }
size_t msatr_trainer_total_steps(const msatr_trainer* t) { return t ? t->trainer.config().total_steps : 0; }

msatr_status msatr_trainer_save(const msatr_trainer* t, const char* path) {
  if (!t || !path) return invalid("trainer and path must not be NULL");
  return guarded([&] { save_checkpoint(path, snapshot(t->trainer)); });
}

void msatr_trainer_free(msatr_trainer* t) { delete t; }

const char* msatr_log_header(void) {
  static const std::string header = log_header();
  return header.c_str();
}

const char* msatr_log_row(const msatr_step_record* record) {
  if (!record) return "";
  g_log_row = log_row(to_record(*record));
  return g_log_row.c_str();
}

msatr_status msatr_model_load(const char* checkpoint_path, msatr_model** out) {
  if (!checkpoint_path || !out) return invalid("checkpoint_path and out must not be NULL");
  return guarded([&] { *out = new msatr_model{restore_generator(load_checkpoint(checkpoint_path))}; });
}

msatr_status msatr_model_identity(size_t width, size_t height, msatr_model** out) {
  if (!out) return invalid("out is NULL");
  return guarded([&] {
    GeneratorConfig cfg;
    cfg.variant = GeneratorVariant::Identity;
    cfg.width = width;
    cfg.height = height;
    *out = new msatr_model{Generator::create(cfg, 0)};
  });
}

msatr_status msatr_model_save(const msatr_model* m, const char* path) {
  if (!m || !path) return invalid("model and path must not be NULL");
  return guarded([&] { save_checkpoint(path, snapshot(m->generator)); });
}

msatr_status msatr_model_info(const msatr_model* m, size_t* width, size_t* height, size_t* parameters) {
  if (!m) return invalid("model is NULL");
  if (width) *width = m->generator.config().width;
  if (height) *height = m->generator.config().height;
  if (parameters) *parameters = m->generator.parameter_count();
  g_last_error.clear();
  return MSATR_OK;
}

msatr_status msatr_model_enhance(const msatr_model* m, const msatr_image* in, msatr_image** out) {
  if (!m || !in || !out) return invalid("model, input and out must not be NULL");
  return guarded([&] { *out = new msatr_image{enhance_image(m->generator, in->image)}; });
}

void msatr_model_free(msatr_model* m) { delete m; }

msatr_status msatr_image_read(const char* path, msatr_image** out) {
  if (!path || !out) return invalid("path and out must not be NULL");
  return guarded([&] { *out = new msatr_image{read_ppm(path)}; });
}

msatr_status msatr_image_write(const msatr_image* img, const char* path) {
  if (!img || !path) return invalid("image and path must not be NULL");
  return guarded([&] { write_ppm(path, img->image); });
}

msatr_status msatr_image_create(size_t width, size_t height, const uint8_t* rgb, msatr_image** out) {
  if (!rgb || !out) return invalid("rgb and out must not be NULL");
  if (width == 0 || height == 0) return invalid("image dimensions must be positive");
  return guarded([&] {
    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.pixels.assign(rgb, rgb + width * height * 3);
    *out = new msatr_image{std::move(img)};
  });
}

size_t msatr_image_width(const msatr_image* img) { return img ? img->image.width : 0; }
size_t msatr_image_height(const msatr_image* img) { return img ? img->image.height : 0; }
const uint8_t* msatr_image_pixels(const msatr_image* img) { return img ? img->image.pixels.data() : nullptr; }
void msatr_image_free(msatr_image* img) { delete img; }

msatr_status msatr_mix(const msatr_image* low, const msatr_image* enhanced, uint64_t seed, msatr_image** out,
                       msatr_mix_info* info) {
  if (!low || !enhanced || !out) return invalid("low, enhanced and out must not be NULL");
  return guarded([&] {
    if (low->image.width != enhanced->image.width || low->image.height != enhanced->image.height) {
      throw ContractError("mix: images differ in size (" + std::to_string(low->image.width) + "x" +
                          std::to_string(low->image.height) + " vs " + std::to_string(enhanced->image.width) + "x" +
                          std::to_string(enhanced->image.height) + ")");
    }
    Rng rng(seed);
    const MixResult m = mix_images(to_tensor(low->image), to_tensor(enhanced->image), rng);
    *out = new msatr_image{from_tensor(m.mixed)};
    if (info) *info = {m.region.top, m.region.left, m.region.height, m.region.width, m.alpha};
  });
}

msatr_status msatr_evaluate(const msatr_model* m, const char* low_dir, const char* ref_dir, size_t passes,
                            msatr_message_fn warn, void* user, msatr_report** out) {
  if (!m || !low_dir || !ref_dir || !out) return invalid("model, directories and out must not be NULL");
  return guarded([&] {
    auto* r = new msatr_report;
    try {
      r->report = evaluate_dirs(m->generator, low_dir, ref_dir, passes, warner(warn, user));
    } catch (...) {
      delete r;
      throw;
    }
    r->tsv = r->report.to_tsv();
    r->summary = r->report.summary();
    *out = r;
  });
}

size_t msatr_report_rows(const msatr_report* r) { return r ? r->report.rows.size() : 0; }
size_t msatr_report_skipped(const msatr_report* r) { return r ? r->report.skipped.size() : 0; }

msatr_status msatr_report_row(const msatr_report* r, size_t i, double* psnr, double* ssim) {
  if (!r) return invalid("report is NULL");
  if (i >= r->report.rows.size()) return invalid("row index out of range");
  if (psnr) *psnr = r->report.rows[i].psnr;
  if (ssim) *ssim = r->report.rows[i].ssim;
  g_last_error.clear();
  return MSATR_OK;
}

double msatr_report_mean_psnr(const msatr_report* r) { return r ? r->report.mean_psnr() : 0.0; }
double msatr_report_mean_ssim(const msatr_report* r) { return r ? r->report.mean_ssim() : 0.0; }
const char* msatr_report_tsv(const msatr_report* r) { return r ? r->tsv.c_str() : ""; }
const char* msatr_report_summary(const msatr_report* r) { return r ? r->summary.c_str() : ""; }
void msatr_report_free(msatr_report* r) { delete r; }

msatr_status msatr_selfcheck(int inject_fault, msatr_check_fn progress, void* user, size_t* failures) {
  return guarded([&] {
    auto checks = builtin_checks();
    if (inject_fault) checks.push_back(faulty_backward_check());
    std::size_t failed = 0;
    run_checks(checks, [&](const CheckResult& r) {
      failed += !r.passed;
      if (progress) progress(r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), r.seconds, user);
    });
    if (failures) *failures = failed;
  });
}

msatr_status msatr_write_synthetic(const char* root, size_t size, uint64_t seed, size_t train_low, size_t train_normal,
                                   size_t eval_pairs) {
  if (!root) return invalid("root is NULL");
  return guarded([&] { write_synthetic_dataset(root, size, seed, {train_low, train_normal, eval_pairs}); });
}

}  // extern "C"
