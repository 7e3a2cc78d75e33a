#include "msatr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "msatr/errors.hpp"

namespace msatr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* form_name(AdversarialForm f) { return f == AdversarialForm::NonSaturating ? "nonsaturating" : "printed"; }
const char* norm_name(IdentityNorm n) { return n == IdentityNorm::SquaredMean ? "squared_mean" : "l2"; }

const std::vector<std::string> kGeneratorKeys = {"variant",         "local_dim",     "local_heads",
                                                 "num_local_layers", "global_embed_dim", "global_heads",
                                                 "global_out_dim",   "fusion_channels"};
const std::vector<std::string> kTrainKeys = {"lr_init",     "beta1",          "beta2",
                                             "eps",         "crop_size",      "batch_size",
                                             "total_steps", "seed",           "local_patches",
                                             "checkpoint_every", "w_adv_global", "w_adv_local",
                                             "w_sfp",       "w_identity",     "w_luminance",
                                             "adversarial_form", "identity_norm", "luminance_alpha_weighted",
                                             "low_dir",     "normal_dir"};

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + body + "'");
    KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (kv.key.empty()) throw ConfigError(where + ": missing key");
    if (!seen.insert(kv.key).second) throw ConfigError(where + ": duplicate key '" + kv.key + "'");
    out.push_back(std::move(kv));
  }
  return out;
}

bool apply_generator_key(GeneratorConfig& cfg, const std::string& key, const std::string& v) {
  if (key == "variant") cfg.variant = parse_variant(v);
  else if (key == "local_dim") cfg.local_dim = to_size(key, v);
  else if (key == "local_heads") cfg.local_heads = to_size(key, v);
  else if (key == "num_local_layers") cfg.num_local_layers = to_size(key, v);
  else if (key == "global_embed_dim") cfg.global_embed_dim = to_size(key, v);
  else if (key == "global_heads") cfg.global_heads = to_size(key, v);
  else if (key == "global_out_dim") cfg.global_out_dim = to_size(key, v);
  else if (key == "fusion_channels") cfg.fusion_channels = to_size(key, v);
  else if (key == "height") cfg.height = to_size(key, v);
  else if (key == "width") cfg.width = to_size(key, v);
  else return false;
  return true;
}

bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& v) {
  if (key == "lr_init") cfg.lr_init = to_double(key, v);
  else if (key == "beta1") cfg.beta1 = to_double(key, v);
  else if (key == "beta2") cfg.beta2 = to_double(key, v);
  else if (key == "eps") cfg.eps = to_double(key, v);
  else if (key == "crop_size") cfg.crop_size = to_size(key, v);
  else if (key == "batch_size") cfg.batch_size = to_size(key, v);
  else if (key == "total_steps") cfg.total_steps = to_size(key, v);
  else if (key == "seed") cfg.seed = to_u64(key, v);
  else if (key == "local_patches") cfg.local_patches = to_size(key, v);
  else if (key == "checkpoint_every") cfg.checkpoint_every = to_size(key, v);
  else if (key == "w_adv_global") cfg.weights.adv_global = to_double(key, v);
  else if (key == "w_adv_local") cfg.weights.adv_local = to_double(key, v);
  else if (key == "w_sfp") cfg.weights.sfp = to_double(key, v);
  else if (key == "w_identity") cfg.weights.identity = to_double(key, v);
  else if (key == "w_luminance") cfg.weights.luminance = to_double(key, v);
  else if (key == "adversarial_form") {
    if (v == "nonsaturating") cfg.options.adversarial = AdversarialForm::NonSaturating;
    else if (v == "printed") cfg.options.adversarial = AdversarialForm::Printed;
    else throw ConfigError(key + ": expected nonsaturating or printed, got '" + v + "'");
  } else if (key == "identity_norm") {
    if (v == "squared_mean") cfg.options.identity_norm = IdentityNorm::SquaredMean;
    else if (v == "l2") cfg.options.identity_norm = IdentityNorm::L2;
    else throw ConfigError(key + ": expected squared_mean or l2, got '" + v + "'");
  } else if (key == "luminance_alpha_weighted") cfg.options.luminance_alpha_weighted = to_bool(key, v);
  else if (key == "low_dir") cfg.low_dir = v;
  else if (key == "normal_dir") cfg.normal_dir = v;
  else return false;
  return true;
}

std::string generator_to_text(const GeneratorConfig& c) {
  std::ostringstream o;
  o << "variant = " << variant_name(c.variant) << "\n"
    << "height = " << c.height << "\n"
    << "width = " << c.width << "\n"
    << "local_dim = " << c.local_dim << "\n"
    << "local_heads = " << c.local_heads << "\n"
    << "num_local_layers = " << c.num_local_layers << "\n"
    << "global_embed_dim = " << c.global_embed_dim << "\n"
    << "global_heads = " << c.global_heads << "\n"
    << "global_out_dim = " << c.global_out_dim << "\n"
    << "fusion_channels = " << c.fusion_channels << "\n";
  return o.str();
}

std::string train_to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "lr_init = " << num(c.lr_init) << "\n"
    << "beta1 = " << num(c.beta1) << "\n"
    << "beta2 = " << num(c.beta2) << "\n"
    << "eps = " << num(c.eps) << "\n"
    << "crop_size = " << c.crop_size << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "total_steps = " << c.total_steps << "\n"
    << "seed = " << c.seed << "\n"
    << "local_patches = " << c.local_patches << "\n"
    << "checkpoint_every = " << c.checkpoint_every << "\n"
    << "w_adv_global = " << num(c.weights.adv_global) << "\n"
    << "w_adv_local = " << num(c.weights.adv_local) << "\n"
    << "w_sfp = " << num(c.weights.sfp) << "\n"
    << "w_identity = " << num(c.weights.identity) << "\n"
    << "w_luminance = " << num(c.weights.luminance) << "\n"
    << "adversarial_form = " << form_name(c.options.adversarial) << "\n"
    << "identity_norm = " << norm_name(c.options.identity_norm) << "\n"
    << "luminance_alpha_weighted = " << (c.options.luminance_alpha_weighted ? "true" : "false") << "\n";
  if (!c.low_dir.empty()) o << "low_dir = " << c.low_dir.string() << "\n";
  if (!c.normal_dir.empty()) o << "normal_dir = " << c.normal_dir.string() << "\n";
  return o.str();
}

GeneratorConfig generator_from_text(const std::string& text) {
  GeneratorConfig cfg;
  for (const auto& kv : parse_key_values(text, "generator config")) {
    if (!apply_generator_key(cfg, kv.key, kv.value)) throw ConfigError("unknown generator key '" + kv.key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig train_from_text(const std::string& text) {
  TrainConfig cfg;
  for (const auto& kv : parse_key_values(text, "train config")) {
    if (!apply_train_key(cfg, kv.key, kv.value)) throw ConfigError("unknown train key '" + kv.key + "'");
  }
  return cfg;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys = kGeneratorKeys;
  keys.insert(keys.end(), kTrainKeys.begin(), kTrainKeys.end());
  return keys;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  RunConfig rc;
  for (const auto& kv : parse_key_values(text, source)) {
    const bool is_generator_key = kv.key != "height" && kv.key != "width";
    if ((is_generator_key && apply_generator_key(rc.generator, kv.key, kv.value)) ||
        apply_train_key(rc.train, kv.key, kv.value)) {
      continue;
    }
    throw ConfigError(source + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  }
  if (!base_dir.empty()) {
    if (!rc.train.low_dir.empty() && rc.train.low_dir.is_relative()) rc.train.low_dir = base_dir / rc.train.low_dir;
    if (!rc.train.normal_dir.empty() && rc.train.normal_dir.is_relative()) {
      rc.train.normal_dir = base_dir / rc.train.normal_dir;
    }
  }
  rc.finalize();
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string(), path.parent_path());
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const bool is_generator_key = key != "height" && key != "width";
  if (!(is_generator_key && apply_generator_key(generator, key, value)) && !apply_train_key(train, key, value)) {
    throw ConfigError("unknown key '" + key + "'");
  }
  finalize();
}

void RunConfig::finalize() {
  generator.height = train.crop_size;
  generator.width = train.crop_size;
  train.validate();
  generator.validate();
}

std::string RunConfig::to_text() const {
  std::string g = generator_to_text(generator);
  std::string out;
  std::istringstream in(g);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("height", 0) == 0 || line.rfind("width", 0) == 0) continue;
    out += line + "\n";
  }
  return out + train_to_text(train);
}

}  // namespace msatr
