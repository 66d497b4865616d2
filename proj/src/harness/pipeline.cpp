#include "utilgen/harness/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"
#include "utilgen/diffusion/textual_inversion.hpp"
#include "utilgen/harness/records.hpp"

namespace utilgen::harness {

namespace fs = std::filesystem;
using diffusion::GeneratorCheckpoint;

SplitBundle build_task(const ExperimentConfig& e) {
  TaskSpec spec = e.task.spec(e.seed);
  spec.label_noise = e.task.label_noise;
  return make_synthetic_task(spec, e.task.sizes, derive_seed(e.seed, "task"));
}

diffusion::NoiseSchedule make_schedule(const ExperimentConfig& e) {
  return diffusion::NoiseSchedule::linear(e.diffusion_steps, e.beta_start, e.beta_end);
}

GeneratorCheckpoint train_base_generator(const ExperimentConfig& e, const LabeledDataset& real) {
  GeneratorCheckpoint gen;
  gen.schedule = make_schedule(e);
  const auto initial = diffusion::initial_tokens(real, e.generator.architecture.cond_dim,
                                                 derive_seed(e.seed, "token_projection"));
  gen.state = diffusion::train_denoiser(real, initial, gen.schedule, e.generator);
  gen.tokens = e.textual_inversion
                   ? diffusion::learn_all_tokens(real, gen.state.trainable, gen.schedule, initial, e.ti)
                   : initial;
  return gen;
}

LabeledDataset few_shot_set(const ExperimentConfig& e, const LabeledDataset& real) {
  return real.take_per_class(static_cast<std::size_t>(e.ti.instances_per_class));
}

std::vector<int> synthesis_counts(const LabeledDataset& real, double budget) {
  std::vector<int> out;
  for (const auto n : real.count_per_class())
    out.push_back(static_cast<int>(std::lround(budget * static_cast<double>(n))));
  return out;
}

LabeledDataset warmup_data(const ExperimentConfig& e, const GeneratorCheckpoint& gen, const LabeledDataset& real) {
  return mlco::generate_per_class(gen.state.trainable, gen.schedule, gen.tokens,
                                  synthesis_counts(real, e.warmup_multiplier), e.ilpo.synthesis_guidance,
                                  e.ilpo.synthesis_steps, derive_seed(e.seed, "warmup"), "warmup");
}

todv::TodvResult value_data(const ExperimentConfig& e, const SplitBundle& bundle, const LabeledDataset& warmup) {
  if (e.todv_enabled) return todv::run_todv(bundle, warmup, e.todv);
  todv::TodvResult out;
  out.phi = todv::WeightNetParams::initial(e.todv.hidden, e.todv.seed);
  const LabeledDataset merged = bundle.real_train.merged_with(warmup);
  auto init = classifier::make_classifier(e.todv.architecture, merged.feature_dim(), merged.num_classes(), e.todv.seed);
  out.classifier = classifier::train(std::move(init), merged, e.train);
  return out;
}

mlco::MlcoResult tune_generator(const ExperimentConfig& e, const GeneratorCheckpoint& gen,
                                const todv::TodvResult& valuation) {
  if (!e.mlco_enabled) {
    mlco::MlcoResult out;
    out.state = gen.state;
    return out;
  }
  return mlco::run_mlco(gen.state, gen.tokens, valuation.phi, valuation.classifier, e.dpo, gen.schedule);
}

LabeledDataset base_synthesis(const ExperimentConfig& e, const GeneratorCheckpoint& gen,
                              const std::vector<int>& counts) {
  return ilpo::generate_baseline(gen.tokens, counts, gen.state.trainable, gen.schedule, e.ilpo.synthesis_guidance,
                                 e.ilpo.synthesis_steps, e.ilpo.seed);
}

ilpo::IlpoResult utilgen_synthesis(const ExperimentConfig& e, const GeneratorCheckpoint& gen,
                                   const diffusion::Denoiser& tuned, const todv::TodvResult& valuation,
                                   const LabeledDataset& real, const std::vector<int>& counts) {
  return ilpo::generate_high_utility(gen.tokens, counts, tuned, valuation.phi, valuation.classifier,
                                     few_shot_set(e, real), gen.schedule, e.ilpo);
}

classifier::ClassifierState train_downstream(const ExperimentConfig& e, const std::string& architecture,
                                             const LabeledDataset& real, const LabeledDataset& synthetic,
                                             Regime regime) {
  const LabeledDataset data = regime == Regime::kJoint ? real.merged_with(synthetic) : synthetic;
  if (data.empty()) throw ConfigError("train_downstream: empty training set for the " + to_string(regime) + " regime");
  auto init = classifier::make_classifier(architecture, real.feature_dim(), real.num_classes(),
                                          derive_seed(e.train.seed, "init/" + architecture));
  return classifier::train(std::move(init), data, e.train);
}

double preferred_mode_mass(const TaskSpec& spec, const LabeledDataset& data) {
  const auto fractions = mode_fractions(spec, data);
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto& w = spec.validation_weights[static_cast<std::size_t>(c)];
    const auto best = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    if (data.count_per_class()[static_cast<std::size_t>(c)] == 0) continue;
    sum += fractions[static_cast<std::size_t>(c)][best];
    ++classes;
  }
  return classes > 0 ? sum / classes : 0.0;
}

// ---- run directory ----

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

void require(const std::vector<fs::path>& paths) {
  std::string missing;
  for (const auto& p : paths)
    if (!fs::exists(p)) missing += "\n  " + p.string();
  if (!missing.empty()) throw ConfigError("missing artifacts (run the earlier stages first):" + missing);
}

struct Paths {
  fs::path real, validation, test, warmup, base, utilgen, flips;
  fs::path generator, tuned, weight_net, scorer, prompts;

  explicit Paths(const RunDir& run)
      : real(run.datasets() / "real_train.txt"),
        validation(run.datasets() / "validation.txt"),
        test(run.datasets() / "test.txt"),
        warmup(run.datasets() / "warmup.txt"),
        base(run.datasets() / "synthetic_base.txt"),
        utilgen(run.datasets() / "synthetic_utilgen.txt"),
        flips(run.datasets() / "train_flips.csv"),
        generator(run.checkpoints() / "generator_base.json"),
        tuned(run.checkpoints() / "generator_tuned.json"),
        weight_net(run.checkpoints() / "weight_net.json"),
        scorer(run.checkpoints() / "scorer.json"),
        prompts(run.checkpoints() / "prompts.json") {}
};

SplitBundle load_bundle(const Paths& p) {
  require({p.real, p.validation, p.test});
  SplitBundle b{load_dataset(p.real), load_dataset(p.validation), load_dataset(p.test), std::nullopt, {}, {}, {}, {}, {}};
  return b;
}

todv::TodvResult load_valuation(const Paths& p) {
  require({p.weight_net, p.scorer});
  todv::TodvResult v;
  v.phi = todv::load_weight_net(p.weight_net);
  v.classifier = classifier::load_classifier(p.scorer);
  return v;
}

void log_stage(const std::string& name) { std::cerr << "[utilgen] " << name << '\n'; }

const std::vector<std::string> kSources = {"base", "utilgen"};

fs::path downstream_path(const RunDir& run, const std::string& source, const std::string& regime) {
  return run.checkpoints() / ("downstream_" + source + "_" + regime + ".json");
}

}  // namespace

RunDir prepare_run_dir(const fs::path& root, const Config& config, const std::string& given_text, bool overwrite) {
  RunDir run{root};
  const fs::path resolved = root / "resolved_config.txt";
  if (fs::exists(resolved) && !overwrite && read_text(resolved) != config.resolved_text())
    throw ConfigError("run directory " + root.string() + " holds a different config (hash mismatch); use a new --out");
  for (const auto& d : {run.datasets(), run.checkpoints(), run.metrics(), run.plots(), run.report()})
    fs::create_directories(d);
  write_text(root / "config.txt", given_text);
  write_text(resolved, config.resolved_text());
  write_text(root / "config_hash.txt", config.hash() + "\n");
  return run;
}

void stage_make_task(const Config& config, const RunDir& run) {
  log_stage("make-task");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  const SplitBundle b = build_task(e);
  save_dataset(b.real_train, p.real);
  save_dataset(b.validation, p.validation);
  save_dataset(b.test, p.test);
  Records flips{{"index", "clean_label", "noisy_label"}, {}};
  for (const auto i : b.flipped)
    flips.rows.push_back({num(i), num(b.clean_train_labels[i]), num(b.real_train[i].label)});
  write_records(p.flips, flips);
}

void stage_warmup(const Config& config, const RunDir& run) {
  log_stage("warmup");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.real});
  const LabeledDataset real = load_dataset(p.real);
  const GeneratorCheckpoint gen = train_base_generator(e, real);
  diffusion::save_generator(p.generator, gen, config.hash());
  save_dataset(warmup_data(e, gen, real), p.warmup);
}

void stage_todv(const Config& config, const RunDir& run) {
  log_stage("todv");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.real, p.validation, p.test, p.warmup});
  const SplitBundle b = load_bundle(p);
  const auto result = value_data(e, b, load_dataset(p.warmup));
  todv::save_weight_net(p.weight_net, result.phi, config.hash());
  classifier::save_classifier(p.scorer, result.classifier, config.hash());
  Records log{{"epoch", "iteration", "train_accuracy", "validation_accuracy", "mean_weight"}, {}};
  for (const auto& m : result.log)
    log.rows.push_back({num(m.epoch), num(m.iteration), num(m.train_accuracy), num(m.validation_accuracy),
                        num(m.mean_weight)});
  write_records(run.metrics() / "todv.csv", log);
}

void stage_mlco(const Config& config, const RunDir& run) {
  log_stage("mlco");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.generator, p.weight_net, p.scorer});
  GeneratorCheckpoint gen = diffusion::load_generator(p.generator);
  const auto result = tune_generator(e, gen, load_valuation(p));
  gen.state = result.state;
  diffusion::save_generator(p.tuned, gen, config.hash());
  Records log{{"iteration", "mean_score", "pairs", "mean_loss"}, {}};
  for (const auto& it : result.log)
    log.rows.push_back({num(it.iteration), num(it.mean_score), num(it.pairs), num(it.mean_loss)});
  write_records(run.metrics() / "mlco.csv", log);
  mlco::save_preference_pairs(run.datasets() / "preference_pairs.csv", result.last_pairs);
  if (!e.retrain_after_mlco || !e.mlco_enabled) return;

  // The tuned generator's samples replace the warmup set and the valuation is
  // trained again from scratch; ilpo and analysis then read the new scorer.
  const LabeledDataset real = load_dataset(p.real);
  const LabeledDataset rewarm =
      mlco::generate_per_class(gen.state.trainable, gen.schedule, gen.tokens, synthesis_counts(real, e.warmup_multiplier),
                               e.ilpo.synthesis_guidance, e.ilpo.synthesis_steps,
                               derive_seed(e.seed, "warmup_retrain"), "warmup_retrain");
  const auto revalued = value_data(e, load_bundle(p), rewarm);
  todv::save_weight_net(p.weight_net, revalued.phi, config.hash());
  classifier::save_classifier(p.scorer, revalued.classifier, config.hash());
}

void stage_generate(const Config& config, const RunDir& run) {
  log_stage("generate");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.generator, p.real});
  const GeneratorCheckpoint gen = diffusion::load_generator(p.generator);
  const LabeledDataset real = load_dataset(p.real);
  save_dataset(base_synthesis(e, gen, synthesis_counts(real, e.synthesis_budget)), p.base);
}

void stage_ilpo(const Config& config, const RunDir& run) {
  log_stage("ilpo");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.generator, p.tuned, p.real, p.weight_net, p.scorer});
  const GeneratorCheckpoint gen = diffusion::load_generator(p.generator);
  const GeneratorCheckpoint tuned = diffusion::load_generator(p.tuned);
  const LabeledDataset real = load_dataset(p.real);
  const auto result = utilgen_synthesis(e, gen, tuned.state.trainable, load_valuation(p), real,
                                        synthesis_counts(real, e.synthesis_budget));
  save_dataset(result.data, p.utilgen);
  diffusion::save_tokens(p.prompts, result.prompts, config.hash());
  Records trace{{"class", "epoch", "objective"}, {}};
  for (std::size_t c = 0; c < result.traces.size(); ++c)
    for (std::size_t i = 0; i < result.traces[c].objective.size(); ++i)
      trace.rows.push_back({num(c), num(i), num(result.traces[c].objective[i])});
  write_records(run.metrics() / "ilpo_prompt.csv", trace);
}

void stage_train(const Config& config, const RunDir& run) {
  log_stage("train");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.real, p.base, p.utilgen});
  const LabeledDataset real = load_dataset(p.real);
  const LabeledDataset empty(real.num_classes(), real.feature_dim(), Provenance::kSynthetic);
  classifier::save_classifier(downstream_path(run, "real", "real"),
                              train_downstream(e, e.train_architecture, real, empty, Regime::kJoint), config.hash());
  for (const auto& source : kSources) {
    const LabeledDataset synthetic = load_dataset(source == "base" ? p.base : p.utilgen);
    for (const Regime regime : e.regimes) {
      if (synthetic.empty() && regime == Regime::kSyntheticOnly) {
        warn("train: no " + source + " synthetic data; skipping the synthetic-only regime");
        continue;
      }
      classifier::save_classifier(downstream_path(run, source, to_string(regime)),
                                  train_downstream(e, e.train_architecture, real, synthetic, regime), config.hash());
    }
  }
}

void stage_eval(const Config& config, const RunDir& run) {
  log_stage("eval");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.test, p.validation});
  const LabeledDataset test = load_dataset(p.test);
  const LabeledDataset validation = load_dataset(p.validation);
  Records acc{{"source", "regime", "architecture", "test_accuracy", "validation_accuracy"}, {}};
  std::vector<std::pair<std::string, std::string>> runs = {{"real", "real"}};
  for (const auto& source : kSources)
    for (const Regime regime : e.regimes) runs.emplace_back(source, to_string(regime));
  for (const auto& [source, regime] : runs) {
    const fs::path ckpt = downstream_path(run, source, regime);
    if (!fs::exists(ckpt)) continue;
    const auto model = classifier::load_classifier(ckpt);
    acc.rows.push_back({source, regime, model.architecture, num(classifier::evaluate(model, test)),
                        num(classifier::evaluate(model, validation))});
  }
  if (acc.rows.empty()) throw ConfigError("eval: no downstream checkpoints; run the train stage first");
  write_records(run.metrics() / "accuracy.csv", acc);
}

void stage_analyze(const Config& config, const RunDir& run) {
  log_stage("analyze");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.real, p.validation, p.test, p.warmup, p.base, p.utilgen, p.weight_net, p.scorer});
  const SplitBundle b = load_bundle(p);
  const auto valuation = load_valuation(p);
  const std::vector<std::pair<std::string, LabeledDataset>> sets = {{"real", b.real_train},
                                                                     {"warmup", load_dataset(p.warmup)},
                                                                     {"base", load_dataset(p.base)},
                                                                     {"utilgen", load_dataset(p.utilgen)}};

  Records weights{{"dataset", "count", "mean", "stddev", "min", "max"}, {}};
  Records hist{{"dataset", "bin", "lo", "hi", "count"}, {}};
  for (const auto& d :
       analysis::weight_histogram(valuation.phi, valuation.classifier, sets, e.histogram_bins)) {
    const auto& h = d.histogram;
    weights.rows.push_back({d.name, num(h.total()), num(h.mean), num(h.stddev), num(h.min), num(h.max)});
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      hist.rows.push_back({d.name, num(i), num(h.lo + width * static_cast<double>(i)),
                           num(h.lo + width * static_cast<double>(i + 1)), num(h.counts[i])});
  }
  write_records(run.metrics() / "weights.csv", weights);
  write_records(run.metrics() / "weight_hist.csv", hist);

  const TaskSpec spec = e.task.spec(e.seed);
  Records modes{{"dataset", "preferred_mode_mass"}, {}};
  Records diversity{{"dataset", "class", "diversity"}, {}};
  Records influence{{"dataset", "samples", "positive_fraction", "mean_score"}, {}};
  Records scores{{"dataset", "bin", "lo", "hi", "count"}, {}};
  const analysis::ProbeConfig probe{e.probe_regularization, 100, 1e-10};
  for (const auto& [name, data] : sets) {
    modes.rows.push_back({name, num(preferred_mode_mass(spec, data))});
    const auto div = analysis::intra_class_diversity(data, valuation.classifier);
    for (std::size_t c = 0; c < div.per_class.size(); ++c)
      diversity.rows.push_back({name, num(c), num(div.per_class[c])});
    diversity.rows.push_back({name, "mean", num(div.mean)});
    if (name == "real" || data.empty()) continue;

    // Influence of a seeded subsample of the synthetic set on the validation loss.
    Rng rng(e.seed, "analysis/influence/" + name);
    const auto m = std::min<std::size_t>(static_cast<std::size_t>(e.influence_samples), data.size());
    auto idx = rng.permutation(data.size());
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    const LabeledDataset sub = data.subset(idx);
    const auto report = analysis::influence_scores(sub, b.validation, valuation.classifier, probe, e.histogram_bins);
    influence.rows.push_back({name, num(m), num(report.positive_fraction), num(report.scores.mean())});
    const auto& h = report.histogram;
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      scores.rows.push_back({name, num(i), num(h.lo + width * static_cast<double>(i)),
                             num(h.lo + width * static_cast<double>(i + 1)), num(h.counts[i])});
  }
  write_records(run.metrics() / "modes.csv", modes);
  write_records(run.metrics() / "diversity.csv", diversity);
  write_records(run.metrics() / "influence.csv", influence);
  write_records(run.metrics() / "influence_hist.csv", scores);
}

void run_pipeline(const Config& config, const RunDir& run) {
  stage_make_task(config, run);
  stage_warmup(config, run);
  stage_todv(config, run);
  stage_mlco(config, run);
  stage_generate(config, run);
  stage_ilpo(config, run);
  stage_train(config, run);
  stage_eval(config, run);
  stage_analyze(config, run);
}

std::vector<ScalingRow> scaling_experiment(const Config& config, const RunDir& run, const std::vector<double>& budgets) {
  log_stage("scaling");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  std::vector<ScalingRow> rows;
  Records out{{"budget", "regime", "base_accuracy", "utilgen_accuracy"}, {}};
  if (!budgets.empty()) {
    require({p.generator, p.tuned, p.real, p.test, p.weight_net, p.scorer});
    const GeneratorCheckpoint gen = diffusion::load_generator(p.generator);
    const GeneratorCheckpoint tuned = diffusion::load_generator(p.tuned);
    const auto valuation = load_valuation(p);
    const LabeledDataset real = load_dataset(p.real);
    const LabeledDataset test = load_dataset(p.test);
    for (const double budget : budgets) {
      const auto counts = synthesis_counts(real, budget);
      const LabeledDataset base = base_synthesis(e, gen, counts);
      const LabeledDataset util = utilgen_synthesis(e, gen, tuned.state.trainable, valuation, real, counts).data;
      for (const Regime regime : e.regimes) {
        ScalingRow row{budget, regime, 0.0, 0.0};
        row.base_accuracy = classifier::evaluate(train_downstream(e, e.train_architecture, real, base, regime), test);
        row.utilgen_accuracy =
            classifier::evaluate(train_downstream(e, e.train_architecture, real, util, regime), test);
        rows.push_back(row);
        out.rows.push_back({num(budget), to_string(regime), num(row.base_accuracy), num(row.utilgen_accuracy)});
      }
    }
  }
  write_records(run.metrics() / "scaling.csv", out);
  return rows;
}

std::vector<ReusabilityRow> reusability_experiment(const Config& config, const RunDir& run) {
  log_stage("reusability");
  const auto e = ExperimentConfig::from(config);
  const Paths p(run);
  require({p.real, p.test, p.base, p.utilgen});
  if (e.todv.architecture == e.reuse_architecture)
    warn("reusability: both architectures are '" + e.reuse_architecture + "'; the comparison is degenerate");
  const LabeledDataset real = load_dataset(p.real);
  const LabeledDataset test = load_dataset(p.test);
  const Regime regime = e.regimes.front();
  std::vector<ReusabilityRow> rows;
  Records out{{"architecture", "source", "regime", "test_accuracy"}, {}};
  for (const auto& arch : {e.todv.architecture, e.reuse_architecture}) {
    for (const auto& source : kSources) {
      const LabeledDataset synthetic = load_dataset(source == "base" ? p.base : p.utilgen);
      ReusabilityRow row{arch, source, regime, 0.0};
      row.accuracy = classifier::evaluate(train_downstream(e, arch, real, synthetic, regime), test);
      rows.push_back(row);
      out.rows.push_back({arch, source, to_string(regime), num(row.accuracy)});
    }
  }
  write_records(run.metrics() / "reusability.csv", out);
  return rows;
}

}  // namespace utilgen::harness
