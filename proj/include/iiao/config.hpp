#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "iiao/densitymap.hpp"
#include "iiao/eval.hpp"
#include "iiao/losses.hpp"
#include "iiao/model.hpp"
#include "iiao/train.hpp"

// Run configuration: one file of `key = value` lines grouped under
// `[section]` headers (a TOML subset), plus `section.key=value` overrides.
namespace iiao::config {

struct Paths {
  std::string train_data;
  std::string test_data;
  std::string out;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  losses::LossConfig loss;
  densitymap::LabelConfig labels;
  eval::EvalOptions eval;
  Paths paths;

  // Every violated constraint across all sections.
  std::vector<std::string> validate() const;
};

// Carries every problem found, one per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

// Sets one dotted key ("train.lr0"). Returns an error message, empty on success.
std::string set(RunConfig& cfg, const std::string& key, const std::string& value);

// Parses `text` on top of `base`, appending problems to `errors`.
void parse_into(RunConfig& cfg, const std::string& text, std::vector<std::string>& errors,
                const std::string& origin = "config");

// Defaults <- file (if non-empty) <- overrides ("key=value"), then validation.
// Throws ConfigError listing every parse and validation problem together.
RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

// Effective configuration in the same syntax `load` accepts.
std::string to_text(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace iiao::config
