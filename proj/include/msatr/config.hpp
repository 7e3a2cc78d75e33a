#pragma once

// Plain-text `key = value` configuration for runs and checkpoints.

#include <string>
#include <utility>
#include <vector>

#include "msatr/generator.hpp"
#include "msatr/training.hpp"

namespace msatr {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Splits `key = value` lines; blank lines and `#` comments are ignored.
// ConfigError names the source and line for malformed or duplicate keys.
std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source = "<config>");

// Each returns false when the key is not one of its own.
bool apply_generator_key(GeneratorConfig& cfg, const std::string& key, const std::string& value);
bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& value);

// Serializations that parse back to equal values (doubles written with 17 digits).
std::string generator_to_text(const GeneratorConfig& cfg);
std::string train_to_text(const TrainConfig& cfg);
GeneratorConfig generator_from_text(const std::string& text);
TrainConfig train_from_text(const std::string& text);

// A training run. The generator resolution follows crop_size, so the config
// file has no height/width keys.
struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;

  // Relative dataset paths are resolved against `base_dir`.
  static RunConfig parse(const std::string& text, const std::string& source = "<config>",
                         const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  // `key=value` override, same keys as the file.
  void set(const std::string& assignment);
  void finalize();
  std::string to_text() const;
};

// Every key accepted in a run config file, in documentation order.
std::vector<std::string> run_config_keys();

}  // namespace msatr
