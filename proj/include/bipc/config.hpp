#pragma once

// Flat "key = value" experiment configuration. Lines starting with '#' and
// trailing "# ..." are comments; blank lines are ignored. Every key is
// optional and falls back to its default.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bipc/data.hpp"
#include "bipc/model.hpp"
#include "bipc/trainer.hpp"

namespace bipc::cli {

enum class Mode { uda, pda, baseline, fig1, ablation_beta, ablation_penalty, ablation_components };

const char* mode_name(Mode m) noexcept;
Mode parse_mode(const std::string& text);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Mode mode = Mode::uda;
  std::string output_dir = "runs/default";
  data::GeneratorSpec generator;  // generator.seed is derived from `seed` at run time
  std::vector<int> hidden{64, 64};
  int feature_dim = 32;
  model::PretrainConfig pretrain;
  train::ScheduleConfig schedule;
  train::TrainConfig train;  // train.seed and train.pda are set from `seed` and `mode`
  int pda_threshold = 14;
  std::vector<int> pda_sweep{0, 2, 4, 8, 14, 20, 30};

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parse or validation failure; `key()` is empty for line-level syntax errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : "config key '" + key + "': " + message),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

ExperimentConfig parse_config(const std::string& text);
/// Every key in a fixed order with round-trippable values.
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a over the sorted canonical "key = value" lines, as 16 hex digits.
/// output.dir is left out: it names where results go, not what is run.
std::string config_hash(const ExperimentConfig& cfg);
/// Throws ConfigError naming the offending key.
void validate(const ExperimentConfig& cfg);

/// The key names accepted by parse_config, in serialisation order.
std::vector<std::string> config_keys();

}  // namespace bipc::cli
