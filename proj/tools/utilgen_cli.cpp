// Command-line front end: one subcommand per pipeline stage plus `pipeline`.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "utilgen/core/error.hpp"
#include "utilgen/harness/config.hpp"
#include "utilgen/harness/pipeline.hpp"
#include "utilgen/harness/report.hpp"

namespace fs = std::filesystem;
using namespace utilgen;
using namespace utilgen::harness;

int main(int argc, char** argv) {
  CLI::App app{"Task-utility-driven synthetic data generation at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out = "run";
  long seed = -1;
  bool overwrite = false;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "root seed (overrides the config)");
  app.add_option("--out", out, "run directory");
  app.add_flag("--overwrite", overwrite, "reuse a run directory created with a different config");

  using Stage = std::function<void(const Config&, const RunDir&)>;
  const std::vector<std::pair<std::string, Stage>> stages = {
      {"make-task", stage_make_task},
      {"warmup", stage_warmup},
      {"todv", stage_todv},
      {"mlco", stage_mlco},
      {"ilpo", stage_ilpo},
      {"generate", stage_generate},
      {"train", stage_train},
      {"eval", stage_eval},
      {"analyze", stage_analyze},
      {"report", [](const Config&, const RunDir& run) { emit_report(run); }},
      {"scaling",
       [](const Config& c, const RunDir& run) {
         scaling_experiment(c, run, ExperimentConfig::from(c).budgets);
       }},
      {"reusability", [](const Config& c, const RunDir& run) { reusability_experiment(c, run); }},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, stage] : stages) subs[name] = app.add_subcommand(name, "run the " + name + " stage");
  bool experiments = false;
  auto* pipeline = app.add_subcommand("pipeline", "every stage, then the report");
  pipeline->add_flag("--experiments", experiments, "also run the scaling and reusability experiments");

  CLI11_PARSE(app, argc, argv);

  try {
    std::string given;
    Config config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      given = ss.str();
      config = Config::parse(given);
    }
    if (seed >= 0) config.set("seed", std::to_string(seed));
    ExperimentConfig::from(config);  // validate before touching the run directory
    const RunDir run = prepare_run_dir(out, config, given, overwrite);

    if (pipeline->parsed()) {
      run_pipeline(config, run);
      if (experiments) {
        scaling_experiment(config, run, ExperimentConfig::from(config).budgets);
        reusability_experiment(config, run);
      }
      emit_report(run);
    } else {
      for (const auto& [name, stage] : stages)
        if (subs[name]->parsed()) stage(config, run);
    }
    if (warning_count() > 0) std::cerr << "[utilgen] " << warning_count() << " warning(s)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "utilgen: " << e.what() << '\n';
    return 1;
  }
}
