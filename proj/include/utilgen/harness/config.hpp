#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/task.hpp"
#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/textual_inversion.hpp"
#include "utilgen/ilpo/ilpo.hpp"
#include "utilgen/mlco/mlco.hpp"
#include "utilgen/todv/todv.hpp"

namespace utilgen::harness {

enum class ValueKind { kInt, kDouble, kBool, kString, kDoubleList, kStringList };

struct ConfigKey {
  std::string name;
  ValueKind kind;
  std::string default_value;
  std::string help;
};

const std::vector<ConfigKey>& config_schema();

/// Flat `section.key = value` configuration resolved against the schema.
/// Lines starting with '#' and blank lines are ignored; unknown keys and
/// malformed values are rejected with the offending line number.
class Config {
 public:
  Config();  // every key at its default

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  [[nodiscard]] const std::string& raw(const std::string& key) const;

  [[nodiscard]] long get_int(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] bool get_bool(const std::string& key) const;
  [[nodiscard]] std::string get_string(const std::string& key) const;
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key) const;
  [[nodiscard]] std::vector<std::string> get_strings(const std::string& key) const;

  // Every key in schema order, one `key = value` per line.
  [[nodiscard]] std::string resolved_text() const;
  // FNV-1a over the resolved text, 16 hex digits.
  [[nodiscard]] std::string hash() const;

  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::string> values_;
};

enum class Regime { kSyntheticOnly, kJoint };
std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TaskConfig {
  std::string kind = "conflict";  // "conflict" or "gaussian"
  int classes = 4;
  int dim = 2;
  SplitSizes sizes;
  double label_noise = 0.0;
  double train_a_weight = 0.5;
  double validation_a_weight = 0.9;
  double radius = 3.0;
  double scale = 0.5;
  double offset = 0.6;
  double separation = 3.0;

  [[nodiscard]] TaskSpec spec(std::uint64_t seed) const;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  TaskConfig task;
  int diffusion_steps = 50;
  double beta_start = 0.002;
  double beta_end = 0.4;
  diffusion::DenoiserTrainingConfig generator;
  bool textual_inversion = true;
  diffusion::TextualInversionConfig ti;
  double warmup_multiplier = 1.0;
  bool todv_enabled = true;
  todv::TodvConfig todv;
  bool retrain_after_mlco = false;
  bool mlco_enabled = true;
  mlco::DpoConfig dpo;
  ilpo::IlpoConfig ilpo;
  double synthesis_budget = 1.0;
  classifier::TrainConfig train;
  std::string train_architecture = "mlp-small";
  std::vector<Regime> regimes;
  std::vector<double> budgets;
  std::string reuse_architecture = "mlp-wide";
  double probe_regularization = 1e-3;
  int influence_samples = 200;
  int histogram_bins = 20;

  static ExperimentConfig from(const Config& config);
};

}  // namespace utilgen::harness
