// Run configuration shared by the command-line tools: `key = value` files
// with `#` comments, overridable from the command line.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lenvae/inference.hpp"
#include "lenvae/model.hpp"
#include "lenvae/training.hpp"

namespace lenvae {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  HyperParams model;
  TrainConfig train;
  DecodeRequest decode;
  std::size_t top_k = 40000;
  std::size_t max_words = 30;
  std::size_t byte_limit = 75;
  std::size_t histogram_bucket = 5;

  /// Desk-scale defaults.
  static RunConfig desk();
  /// Full-scale values: cell 243, embedding 254, latent 124, bag-of-words
  /// hidden 236, length embedding 50, 1000 samples, beam 100, batch 512.
  static RunConfig paper();
  static RunConfig preset(const std::string& name);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text);
  /// Every field as `key = value`, one per line.
  std::string to_text() const;
};

struct ConfigField {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigField>& config_fields();

}  // namespace lenvae
