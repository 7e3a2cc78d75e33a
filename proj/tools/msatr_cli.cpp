// msatr command-line tool. Exit codes: 0 success, 1 check or run failure,
// 2 usage/config/dataset error, 3 I/O or checkpoint error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msatr/msatr.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

int exit_code(msatr_status s) {
  switch (s) {
    case MSATR_OK: return kExitOk;
    case MSATR_ERR_INVALID_ARGUMENT:
    case MSATR_ERR_CONFIG:
    case MSATR_ERR_DATASET: return kExitUsage;
    case MSATR_ERR_IO:
    case MSATR_ERR_CHECKPOINT: return kExitIo;
    default: return kExitFailure;
  }
}

int report(msatr_status s, const std::string& context) {
  std::cerr << "msatr: " << context << ": " << msatr_last_error() << "\n";
  return exit_code(s);
}

void print_warning(const char* message, void*) { std::cerr << "warning: " << message << "\n"; }

bool ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) std::cerr << "msatr: cannot create " << dir << ": " << ec.message() << "\n";
  return !ec;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  msatr_trainer* trainer = nullptr;
  msatr_config* cfg = nullptr;
  std::size_t every = 0;
  if (!a.resume.empty()) {
    if (msatr_status s = msatr_trainer_resume(a.resume.c_str(), print_warning, nullptr, &trainer); s != MSATR_OK) {
      return report(s, "resume " + a.resume);
    }
  } else {
    if (a.config.empty()) {
      std::cerr << "msatr: train needs --config (or --resume)\n";
      return kExitUsage;
    }
    if (msatr_status s = msatr_config_load(a.config.c_str(), &cfg); s != MSATR_OK) return report(s, "config");
    for (const auto& o : a.overrides) {
      if (msatr_status s = msatr_config_set(cfg, o.c_str()); s != MSATR_OK) {
        msatr_config_free(cfg);
        return report(s, "override '" + o + "'");
      }
    }
    every = msatr_config_checkpoint_every(cfg);
    msatr_status s = msatr_trainer_create(cfg, print_warning, nullptr, &trainer);
    if (s != MSATR_OK) {
      msatr_config_free(cfg);
      return report(s, "train");
    }
  }
  const fs::path out = a.out;
  if (!ensure_dir(out)) {
    msatr_trainer_free(trainer);
    msatr_config_free(cfg);
    return kExitIo;
  }
  if (cfg) {
    std::ofstream(out / "config.txt") << msatr_config_text(cfg);
  }
  const bool append = !a.resume.empty();
  std::ofstream log(out / "train_log.tsv", append ? std::ios::app : std::ios::trunc);
  if (!log) {
    std::cerr << "msatr: cannot write " << (out / "train_log.tsv") << "\n";
    msatr_trainer_free(trainer);
    msatr_config_free(cfg);
    return kExitIo;
  }
  if (!append) log << msatr_log_header() << "\n";

  int code = kExitOk;
  const std::size_t total = msatr_trainer_total_steps(trainer);
  while (msatr_trainer_current_step(trainer) < total) {
    msatr_step_record rec;
    if (msatr_status s = msatr_trainer_step(trainer, &rec); s != MSATR_OK) {
      code = report(s, "step " + std::to_string(msatr_trainer_current_step(trainer) + 1));
      break;
    }
    log << msatr_log_row(&rec) << "\n";
    log.flush();
    if (!a.quiet && (rec.step % 10 == 0 || rec.step == total)) {
      std::fprintf(stderr, "step %zu/%zu  total %.5f  d %.5f\n", rec.step, total, rec.total, rec.d_loss);
    }
    if (every > 0 && rec.step % every == 0 && rec.step < total) {
      char name[48];
      std::snprintf(name, sizeof name, "step_%06zu.mstr", rec.step);
      if (msatr_status s = msatr_trainer_save(trainer, (out / name).string().c_str()); s != MSATR_OK) {
        code = report(s, "checkpoint");
        break;
      }
    }
  }
  if (code == kExitOk) {
    const fs::path final_path = out / "final.mstr";
    if (msatr_status s = msatr_trainer_save(trainer, final_path.string().c_str()); s != MSATR_OK) {
      code = report(s, "checkpoint");
    } else if (!a.quiet) {
      std::cout << "wrote " << final_path.string() << "\n";
    }
  }
  msatr_trainer_free(trainer);
  msatr_config_free(cfg);
  return code;
}

int cmd_enhance(const std::string& ckpt, const std::vector<std::string>& inputs, const std::string& out_dir) {
  msatr_model* model = nullptr;
  if (msatr_status s = msatr_model_load(ckpt.c_str(), &model); s != MSATR_OK) return report(s, "load " + ckpt);
  if (!ensure_dir(out_dir)) {
    msatr_model_free(model);
    return kExitIo;
  }
  int code = kExitOk;
  for (const auto& in : inputs) {
    msatr_image* img = nullptr;
    msatr_image* enhanced = nullptr;
    msatr_status s = msatr_image_read(in.c_str(), &img);
    if (s == MSATR_OK) s = msatr_model_enhance(model, img, &enhanced);
    const fs::path dest = fs::path(out_dir) / fs::path(in).filename().replace_extension(".ppm");
    if (s == MSATR_OK) s = msatr_image_write(enhanced, dest.string().c_str());
    if (s != MSATR_OK) {
      const int c = report(s, in);
      if (code == kExitOk) code = c;
    } else {
      std::cout << in << " -> " << dest.string() << "\n";
    }
    msatr_image_free(img);
    msatr_image_free(enhanced);
  }
  msatr_model_free(model);
  return code;
}

int cmd_eval(const std::string& ckpt, const std::string& low, const std::string& ref, const std::string& out,
             std::size_t passes) {
  msatr_model* model = nullptr;
  if (msatr_status s = msatr_model_load(ckpt.c_str(), &model); s != MSATR_OK) return report(s, "load " + ckpt);
  msatr_report* rep = nullptr;
  msatr_status s = msatr_evaluate(model, low.c_str(), ref.c_str(), passes, print_warning, nullptr, &rep);
  msatr_model_free(model);
  if (s != MSATR_OK) return report(s, "eval");
  int code = kExitOk;
  std::ofstream f(out, std::ios::trunc);
  if (!f || !(f << msatr_report_tsv(rep))) {
    std::cerr << "msatr: cannot write " << out << "\n";
    code = kExitIo;
  }
  std::cout << msatr_report_summary(rep) << "\n";
  msatr_report_free(rep);
  return code;
}

int cmd_mix(const std::string& low, const std::string& enh, std::uint64_t seed, const std::string& out) {
  msatr_image* a = nullptr;
  msatr_image* b = nullptr;
  msatr_image* mixed = nullptr;
  msatr_mix_info info{};
  int code = kExitOk;
  msatr_status s = msatr_image_read(low.c_str(), &a);
  if (s != MSATR_OK) {
    code = report(s, low);
  } else if ((s = msatr_image_read(enh.c_str(), &b)) != MSATR_OK) {
    code = report(s, enh);
  } else if ((s = msatr_mix(a, b, seed, &mixed, &info)) != MSATR_OK) {
    code = report(s, "mix");
  } else if ((s = msatr_image_write(mixed, out.c_str())) != MSATR_OK) {
    code = report(s, out);
  } else {
    std::printf("region top=%zu left=%zu height=%zu width=%zu alpha=%.17g\n", info.top, info.left, info.height,
                info.width, info.alpha);
  }
  msatr_image_free(a);
  msatr_image_free(b);
  msatr_image_free(mixed);
  return code;
}

void print_check(const char* name, int passed, const char* detail, double seconds, void*) {
  std::printf("%s  %-28s %s (%.2fs)\n", passed ? "PASS" : "FAIL", name, detail, seconds);
  std::fflush(stdout);
}

int cmd_selfcheck(bool inject_fault) {
  std::size_t failures = 0;
  if (msatr_status s = msatr_selfcheck(inject_fault ? 1 : 0, print_check, nullptr, &failures); s != MSATR_OK) {
    return report(s, "selfcheck");
  }
  if (failures) {
    std::printf("selfcheck: %zu check(s) failed\n", failures);
    return kExitFailure;
  }
  std::printf("selfcheck: all checks passed\n");
  return kExitOk;
}

int cmd_identity(std::size_t width, std::size_t height, const std::string& out) {
  msatr_model* model = nullptr;
  if (msatr_status s = msatr_model_identity(width, height, &model); s != MSATR_OK) return report(s, "identity");
  msatr_status s = msatr_model_save(model, out.c_str());
  msatr_model_free(model);
  return s == MSATR_OK ? kExitOk : report(s, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msatr: multi-scale attention low-light enhancement"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train from a config file");
  t->add_option("--config", train.config, "Run config (key = value)");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--set", train.overrides, "Override a config key (key=value), repeatable");
  t->add_option("--resume", train.resume, "Continue from a checkpoint with training state");
  t->add_flag("--quiet", train.quiet, "No progress output");

  std::string ckpt, out;
  std::vector<std::string> inputs;
  auto* e = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
  e->add_option("--ckpt", ckpt, "Checkpoint")->required();
  e->add_option("--in", inputs, "Input PPM images")->required();
  e->add_option("--out", out, "Output directory")->required();

  std::string low, ref;
  std::size_t passes = 3;
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM over paired directories");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--low", low, "Low-light directory")->required();
  ev->add_option("--ref", ref, "Reference directory")->required();
  ev->add_option("--out", out, "Report file (TSV)")->required();
  ev->add_option("--passes", passes, "Repeated enhancements recorded per image");

  std::string enh;
  std::uint64_t seed = 0;
  auto* m = app.add_subcommand("mix", "Preview one random region mix");
  m->add_option("--low", low, "Low-light image")->required();
  m->add_option("--enh", enh, "Enhanced image")->required();
  m->add_option("--seed", seed, "Random seed")->required();
  m->add_option("--out", out, "Output PPM")->required();

  bool inject_fault = false;
  auto* sc = app.add_subcommand("selfcheck", "Run built-in gradient and oracle checks");
  sc->add_flag("--inject-fault", inject_fault, "Add a check with a deliberately broken backward rule");

  std::size_t size = 64, n_low = 8, n_normal = 8, n_eval = 4;
  auto* sy = app.add_subcommand("synth", "Write a procedural dataset");
  sy->add_option("--out", out, "Root directory")->required();
  sy->add_option("--size", size, "Image side");
  sy->add_option("--seed", seed, "Random seed");
  sy->add_option("--low", n_low, "Training low-light images");
  sy->add_option("--normal", n_normal, "Training normal-light images");
  sy->add_option("--eval", n_eval, "Evaluation pairs");

  std::size_t width = 64, height = 64;
  auto* id = app.add_subcommand("identity", "Write a pass-through checkpoint");
  id->add_option("--width", width, "Width");
  id->add_option("--height", height, "Height");
  id->add_option("--out", out, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  if (t->parsed()) return cmd_train(train);
  if (e->parsed()) return cmd_enhance(ckpt, inputs, out);
  if (ev->parsed()) return cmd_eval(ckpt, low, ref, out, passes);
  if (m->parsed()) return cmd_mix(low, enh, seed, out);
  if (sc->parsed()) return cmd_selfcheck(inject_fault);
  if (sy->parsed()) {
    msatr_status s = msatr_write_synthetic(out.c_str(), size, seed, n_low, n_normal, n_eval);
    return s == MSATR_OK ? kExitOk : report(s, "synth");
  }
  if (id->parsed()) return cmd_identity(width, height, out);
  return kExitUsage;
}
