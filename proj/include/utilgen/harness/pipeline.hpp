#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "utilgen/analysis/analysis.hpp"
#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/task.hpp"
#include "utilgen/diffusion/checkpoint.hpp"
#include "utilgen/harness/config.hpp"
#include "utilgen/ilpo/ilpo.hpp"
#include "utilgen/mlco/mlco.hpp"
#include "utilgen/todv/todv.hpp"

namespace utilgen::harness {

// ---- in-memory stages ----

SplitBundle build_task(const ExperimentConfig& e);
diffusion::NoiseSchedule make_schedule(const ExperimentConfig& e);

// Base generator: denoiser trained on the real split, tokens refined by textual inversion.
diffusion::GeneratorCheckpoint train_base_generator(const ExperimentConfig& e, const LabeledDataset& real);
LabeledDataset few_shot_set(const ExperimentConfig& e, const LabeledDataset& real);

// Per-class sample counts: round(budget * real count of the class).
std::vector<int> synthesis_counts(const LabeledDataset& real, double budget);

LabeledDataset warmup_data(const ExperimentConfig& e, const diffusion::GeneratorCheckpoint& gen,
                           const LabeledDataset& real);

// With TODV disabled the weight net stays at its constant initial output and
// the scorer is trained without weights.
todv::TodvResult value_data(const ExperimentConfig& e, const SplitBundle& bundle, const LabeledDataset& warmup);

// With MLCO disabled the base state is returned untouched and the log is empty.
mlco::MlcoResult tune_generator(const ExperimentConfig& e, const diffusion::GeneratorCheckpoint& gen,
                                const todv::TodvResult& valuation);

LabeledDataset base_synthesis(const ExperimentConfig& e, const diffusion::GeneratorCheckpoint& gen,
                              const std::vector<int>& counts);
ilpo::IlpoResult utilgen_synthesis(const ExperimentConfig& e, const diffusion::GeneratorCheckpoint& gen,
                                   const diffusion::Denoiser& tuned, const todv::TodvResult& valuation,
                                   const LabeledDataset& real, const std::vector<int>& counts);

// Unweighted downstream training; joint prepends the real split. An empty
// training set throws ConfigError.
classifier::ClassifierState train_downstream(const ExperimentConfig& e, const std::string& architecture,
                                             const LabeledDataset& real, const LabeledDataset& synthetic,
                                             Regime regime);

// Mean over classes of the fraction of samples nearest the class's preferred
// (highest validation weight) mode.
double preferred_mode_mass(const TaskSpec& spec, const LabeledDataset& data);

// ---- run directory ----

struct RunDir {
  std::filesystem::path root;

  [[nodiscard]] std::filesystem::path datasets() const { return root / "datasets"; }
  [[nodiscard]] std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  [[nodiscard]] std::filesystem::path metrics() const { return root / "metrics"; }
  [[nodiscard]] std::filesystem::path plots() const { return root / "plots"; }
  [[nodiscard]] std::filesystem::path report() const { return root / "report"; }
};

/// Creates the layout and writes config.txt (the text as given) and
/// resolved_config.txt (every key, defaults included). Refuses a directory
/// whose resolved config has a different hash unless `overwrite` is set.
RunDir prepare_run_dir(const std::filesystem::path& root, const Config& config, const std::string& given_text,
                       bool overwrite = false);

// File-backed stages; each reads its inputs from the run directory and
// throws ConfigError naming any missing artifact.
void stage_make_task(const Config& config, const RunDir& run);
void stage_warmup(const Config& config, const RunDir& run);
void stage_todv(const Config& config, const RunDir& run);
void stage_mlco(const Config& config, const RunDir& run);
void stage_generate(const Config& config, const RunDir& run);
void stage_ilpo(const Config& config, const RunDir& run);
void stage_train(const Config& config, const RunDir& run);
void stage_eval(const Config& config, const RunDir& run);
void stage_analyze(const Config& config, const RunDir& run);

// Every stage in order; a failing stage leaves earlier artifacts in place.
void run_pipeline(const Config& config, const RunDir& run);

struct ScalingRow {
  double budget = 0.0;
  Regime regime = Regime::kSyntheticOnly;
  double base_accuracy = 0.0;
  double utilgen_accuracy = 0.0;
};

/// Re-synthesizes at every budget with the run's generator and valuation and
/// trains each configured regime. Writes metrics/scaling.csv.
std::vector<ScalingRow> scaling_experiment(const Config& config, const RunDir& run, const std::vector<double>& budgets);

struct ReusabilityRow {
  std::string architecture;
  std::string source;  // "base" or "utilgen"
  Regime regime = Regime::kSyntheticOnly;
  double accuracy = 0.0;
};

/// Data generated with the todv architecture in the loop, consumed by both the
/// todv architecture and experiments.reuse_architecture. Writes metrics/reusability.csv.
std::vector<ReusabilityRow> reusability_experiment(const Config& config, const RunDir& run);

}  // namespace utilgen::harness
