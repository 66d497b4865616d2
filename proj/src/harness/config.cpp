#include "utilgen/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"

namespace utilgen::harness {

const std::vector<ConfigKey>& config_schema() {
  using K = ValueKind;
  static const std::vector<ConfigKey> schema = {
      {"seed", K::kInt, "0", "root seed; every stage derives a named stream from it"},
      {"task.kind", K::kString, "conflict", "conflict | gaussian"},
      {"task.classes", K::kInt, "4", ""},
      {"task.dim", K::kInt, "2", ""},
      {"task.train_size", K::kInt, "1000", ""},
      {"task.validation_size", K::kInt, "200", ""},
      {"task.test_size", K::kInt, "1000", ""},
      {"task.label_noise", K::kDouble, "0", "fraction of training labels flipped"},
      {"task.train_a_weight", K::kDouble, "0.5", "conflict: mode-A share of the training marginal"},
      {"task.validation_a_weight", K::kDouble, "0.9", "conflict: mode-A share of validation and test"},
      {"task.radius", K::kDouble, "3", ""},
      {"task.scale", K::kDouble, "0.5", ""},
      {"task.offset", K::kDouble, "0.6", ""},
      {"task.separation", K::kDouble, "3", "gaussian: spread of the class means"},
      {"diffusion.steps", K::kInt, "50", "T"},
      {"diffusion.beta_start", K::kDouble, "0.002", ""},
      {"diffusion.beta_end", K::kDouble, "0.4", ""},
      {"generator.hidden", K::kInt, "128", ""},
      {"generator.time_dim", K::kInt, "32", ""},
      {"generator.cond_dim", K::kInt, "16", ""},
      {"generator.train_steps", K::kInt, "3000", ""},
      {"generator.batch", K::kInt, "128", ""},
      {"generator.lr", K::kDouble, "0.002", ""},
      {"generator.cond_dropout", K::kDouble, "0.1", ""},
      {"ti.enabled", K::kBool, "true", "refine class tokens by textual inversion"},
      {"ti.lr", K::kDouble, "0.0001", ""},
      {"ti.steps", K::kInt, "400", ""},
      {"ti.batch", K::kInt, "1", ""},
      {"ti.instances", K::kInt, "16", "few-shot real samples per class"},
      {"warmup.multiplier", K::kDouble, "1", "warmup synthetic volume relative to the real set"},
      {"todv.enabled", K::kBool, "true", ""},
      {"todv.max_iters", K::kInt, "3000", ""},
      {"todv.hidden", K::kInt, "100", ""},
      {"todv.classifier_lr", K::kDouble, "0.01", ""},
      {"todv.virtual_lr", K::kDouble, "0.01", ""},
      {"todv.meta_lr", K::kDouble, "0.001", ""},
      {"todv.train_batch", K::kInt, "128", ""},
      {"todv.val_batch", K::kInt, "128", ""},
      {"todv.momentum", K::kDouble, "0.9", ""},
      {"todv.weight_decay", K::kDouble, "0.0005", ""},
      {"todv.architecture", K::kString, "mlp-small", ""},
      {"todv.retrain_after_mlco", K::kBool, "false", "revalue on samples from the tuned generator before ilpo"},
      {"mlco.enabled", K::kBool, "true", ""},
      {"mlco.beta", K::kDouble, "500", ""},
      {"mlco.lr", K::kDouble, "0.0001", ""},
      {"mlco.batch", K::kInt, "8", "pairs per DPO step"},
      {"mlco.iterations", K::kInt, "3", ""},
      {"mlco.rho", K::kDouble, "0.25", ""},
      {"mlco.pair_cap", K::kInt, "64", "pairs per class per iteration"},
      {"mlco.samples_per_class", K::kInt, "64", ""},
      {"mlco.max_steps_per_class", K::kInt, "400", ""},
      {"ilpo.prompt", K::kBool, "true", "optimize class prompts"},
      {"ilpo.noise", K::kBool, "true", "refine initial noise by the guidance round trip"},
      {"ilpo.prompt_lr", K::kDouble, "0.001", ""},
      {"ilpo.prompt_epochs", K::kInt, "400", ""},
      {"ilpo.draws", K::kInt, "8", ""},
      {"ilpo.chain_length", K::kInt, "10", ""},
      {"ilpo.omega_denoise", K::kDouble, "5.5", ""},
      {"ilpo.omega_invert", K::kDouble, "0", ""},
      {"ilpo.lambda", K::kDouble, "0.1", ""},
      {"ilpo.round_trips", K::kInt, "1", ""},
      {"ilpo.inversion_refinements", K::kInt, "3", "fixed-point passes per DDIM inversion step (0 = first order)"},
      {"synthesis.guidance", K::kDouble, "2", ""},
      {"synthesis.steps", K::kInt, "50", ""},
      {"synthesis.budget", K::kDouble, "1", "synthetic volume relative to the real set"},
      {"train.architecture", K::kString, "mlp-small", ""},
      {"train.epochs", K::kInt, "30", ""},
      {"train.batch", K::kInt, "32", ""},
      {"train.lr", K::kDouble, "0.01", ""},
      {"train.momentum", K::kDouble, "0.9", ""},
      {"train.weight_decay", K::kDouble, "0.0005", ""},
      {"train.regimes", K::kStringList, "synthetic,joint", "synthetic | joint"},
      {"experiments.budgets", K::kDoubleList, "1,3,5", "scaling experiment budgets"},
      {"experiments.reuse_architecture", K::kString, "mlp-wide", "consumer architecture for the reusability table"},
      {"analysis.probe_regularization", K::kDouble, "0.001", ""},
      {"analysis.influence_samples", K::kInt, "200", "synthetic samples scored per source"},
      {"analysis.bins", K::kInt, "20", ""},
  };
  return schema;
}

namespace {

const ConfigKey& lookup(const std::string& key) {
  const auto& schema = config_schema();
  const auto it = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == key; });
  if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_long(const std::string& s, long& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

void check_value(const ConfigKey& key, const std::string& value) {
  long l = 0;
  switch (key.kind) {
    case ValueKind::kInt:
      if (!parse_long(value, l)) throw ConfigError(key.name + ": expected an integer, got '" + value + "'");
      break;
    case ValueKind::kDouble:
      try {
        (void)parse_double(value);
      } catch (const ParseError&) {
        throw ConfigError(key.name + ": expected a number, got '" + value + "'");
      }
      break;
    case ValueKind::kBool:
      if (value != "true" && value != "false") throw ConfigError(key.name + ": expected true or false");
      break;
    case ValueKind::kDoubleList:
      for (const auto& item : split_list(value)) check_value({key.name, ValueKind::kDouble, "", ""}, item);
      break;
    case ValueKind::kString:
    case ValueKind::kStringList:
      break;
  }
}

}  // namespace

Config::Config() {
  for (const auto& key : config_schema()) values_[key.name] = key.default_value;
}

Config Config::parse(const std::string& text) {
  Config config;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(number) + ": expected key = value");
    try {
      config.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  check_value(lookup(key), value);
  values_[key] = value;
}

const std::string& Config::raw(const std::string& key) const {
  lookup(key);
  return values_.at(key);
}

long Config::get_int(const std::string& key) const {
  long out = 0;
  parse_long(raw(key), out);
  return out;
}

double Config::get_double(const std::string& key) const { return parse_double(raw(key)); }
bool Config::get_bool(const std::string& key) const { return raw(key) == "true"; }
std::string Config::get_string(const std::string& key) const { return raw(key); }

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_double(item));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key) const { return split_list(raw(key)); }

std::string Config::resolved_text() const {
  std::string out;
  for (const auto& key : config_schema()) out += key.name + " = " + values_.at(key.name) + "\n";
  return out;
}

std::string Config::hash() const {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(resolved_text());
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

std::string to_string(Regime r) { return r == Regime::kSyntheticOnly ? "synthetic" : "joint"; }

Regime regime_from_string(const std::string& s) {
  if (s == "synthetic") return Regime::kSyntheticOnly;
  if (s == "joint") return Regime::kJoint;
  throw ConfigError("unknown training regime '" + s + "' (synthetic | joint)");
}

TaskSpec TaskConfig::spec(std::uint64_t seed) const {
  if (kind == "conflict") return conflict_task(classes, dim, train_a_weight, validation_a_weight, radius, scale, offset);
  if (kind == "gaussian")
    return gaussian_classes_task(classes, dim, separation, scale, label_noise, derive_seed(seed, "task_layout"));
  throw ConfigError("unknown task.kind '" + kind + "' (conflict | gaussian)");
}

ExperimentConfig ExperimentConfig::from(const Config& c) {
  ExperimentConfig e;
  const auto positive = [&](const char* key) {
    if (c.get_int(key) <= 0) throw ConfigError(std::string(key) + " must be positive");
    return static_cast<int>(c.get_int(key));
  };
  e.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  const auto stream = [&](const char* name) { return derive_seed(e.seed, name); };

  e.task.kind = c.get_string("task.kind");
  e.task.classes = positive("task.classes");
  e.task.dim = positive("task.dim");
  e.task.sizes = {static_cast<std::size_t>(positive("task.train_size")),
                  static_cast<std::size_t>(positive("task.validation_size")),
                  static_cast<std::size_t>(positive("task.test_size"))};
  e.task.label_noise = c.get_double("task.label_noise");
  if (!(e.task.label_noise >= 0 && e.task.label_noise < 1)) throw ConfigError("task.label_noise must lie in [0, 1)");
  e.task.train_a_weight = c.get_double("task.train_a_weight");
  e.task.validation_a_weight = c.get_double("task.validation_a_weight");
  e.task.radius = c.get_double("task.radius");
  e.task.scale = c.get_double("task.scale");
  e.task.offset = c.get_double("task.offset");
  e.task.separation = c.get_double("task.separation");

  e.diffusion_steps = positive("diffusion.steps");
  e.beta_start = c.get_double("diffusion.beta_start");
  e.beta_end = c.get_double("diffusion.beta_end");

  e.generator.architecture = {positive("generator.hidden"), positive("generator.time_dim"),
                              positive("generator.cond_dim")};
  e.generator.steps = static_cast<int>(c.get_int("generator.train_steps"));
  e.generator.batch_size = positive("generator.batch");
  e.generator.learning_rate = c.get_double("generator.lr");
  e.generator.cond_dropout = c.get_double("generator.cond_dropout");
  e.generator.seed = stream("generator");

  e.textual_inversion = c.get_bool("ti.enabled");
  e.ti = {c.get_double("ti.lr"), static_cast<int>(c.get_int("ti.steps")), positive("ti.batch"), positive("ti.instances"),
          stream("textual_inversion")};
  e.warmup_multiplier = c.get_double("warmup.multiplier");

  e.todv_enabled = c.get_bool("todv.enabled");
  e.todv.max_iters = static_cast<int>(c.get_int("todv.max_iters"));
  e.todv.hidden = positive("todv.hidden");
  e.todv.classifier_lr = c.get_double("todv.classifier_lr");
  e.todv.virtual_lr = c.get_double("todv.virtual_lr");
  e.todv.meta_lr = c.get_double("todv.meta_lr");
  e.todv.train_batch = positive("todv.train_batch");
  e.todv.val_batch = positive("todv.val_batch");
  e.todv.momentum = c.get_double("todv.momentum");
  e.todv.weight_decay = c.get_double("todv.weight_decay");
  e.todv.architecture = c.get_string("todv.architecture");
  e.retrain_after_mlco = c.get_bool("todv.retrain_after_mlco");
  e.todv.seed = stream("todv");
  e.todv.validate();
  classifier::hidden_width_for(e.todv.architecture);

  e.mlco_enabled = c.get_bool("mlco.enabled");
  e.dpo.beta = c.get_double("mlco.beta");
  e.dpo.learning_rate = c.get_double("mlco.lr");
  e.dpo.batch_size = positive("mlco.batch");
  e.dpo.iterations = static_cast<int>(c.get_int("mlco.iterations"));
  e.dpo.rho = c.get_double("mlco.rho");
  e.dpo.pair_cap = static_cast<int>(c.get_int("mlco.pair_cap"));
  e.dpo.samples_per_class = positive("mlco.samples_per_class");
  e.dpo.max_steps_per_class = static_cast<int>(c.get_int("mlco.max_steps_per_class"));
  e.dpo.guidance = c.get_double("synthesis.guidance");
  e.dpo.sampling_steps = positive("synthesis.steps");
  e.dpo.seed = stream("mlco");
  if (e.mlco_enabled) e.dpo.validate();

  e.ilpo.optimize_prompts = c.get_bool("ilpo.prompt");
  e.ilpo.optimize_noise = c.get_bool("ilpo.noise");
  e.ilpo.prompt_lr = c.get_double("ilpo.prompt_lr");
  e.ilpo.prompt_epochs = static_cast<int>(c.get_int("ilpo.prompt_epochs"));
  e.ilpo.draws = positive("ilpo.draws");
  e.ilpo.chain_length = positive("ilpo.chain_length");
  e.ilpo.omega_denoise = c.get_double("ilpo.omega_denoise");
  e.ilpo.omega_invert = c.get_double("ilpo.omega_invert");
  e.ilpo.lambda = c.get_double("ilpo.lambda");
  e.ilpo.round_trips = positive("ilpo.round_trips");
  e.ilpo.inversion_refinements = static_cast<int>(c.get_int("ilpo.inversion_refinements"));
  e.ilpo.synthesis_guidance = c.get_double("synthesis.guidance");
  e.ilpo.synthesis_steps = positive("synthesis.steps");
  // Shares the root seed so the noise streams match the plain baseline.
  e.ilpo.seed = stream("synthesis");
  e.ilpo.validate();

  e.synthesis_budget = c.get_double("synthesis.budget");
  if (!(e.synthesis_budget >= 0)) throw ConfigError("synthesis.budget must be non-negative");
  e.train_architecture = c.get_string("train.architecture");
  classifier::hidden_width_for(e.train_architecture);
  e.train.epochs = static_cast<int>(c.get_int("train.epochs"));
  e.train.batch_size = positive("train.batch");
  e.train.learning_rate = c.get_double("train.lr");
  e.train.momentum = c.get_double("train.momentum");
  e.train.weight_decay = c.get_double("train.weight_decay");
  e.train.seed = stream("train");
  for (const auto& r : c.get_strings("train.regimes")) e.regimes.push_back(regime_from_string(r));
  if (e.regimes.empty()) throw ConfigError("train.regimes must name at least one regime");

  e.budgets = c.get_doubles("experiments.budgets");
  for (const double b : e.budgets)
    if (!(b > 0)) throw ConfigError("experiments.budgets must be positive");
  e.reuse_architecture = c.get_string("experiments.reuse_architecture");
  classifier::hidden_width_for(e.reuse_architecture);
  e.probe_regularization = c.get_double("analysis.probe_regularization");
  e.influence_samples = positive("analysis.influence_samples");
  e.histogram_bins = positive("analysis.bins");
  return e;
}

}  // namespace utilgen::harness
