#include "utilgen/core/task.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"

namespace utilgen {

namespace {

constexpr double kWeightTolerance = 1e-9;

void check_weights(const std::vector<double>& w, const std::string& what) {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ValidationError(what + ": mixing weights must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > kWeightTolerance)
    throw ValidationError(what + ": mixing weights sum to " + std::to_string(total) + ", not 1");
}

int draw_mode(Rng& rng, const std::vector<double>& weights) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    acc += weights[m];
    if (u < acc) return static_cast<int>(m);
  }
  return static_cast<int>(weights.size()) - 1;
}

// Balanced labels in shuffled order.
LabeledDataset draw_split(const TaskSpec& spec, std::size_t n, Provenance provenance,
                          bool use_validation_weights, Rng& rng, std::vector<int>& modes) {
  LabeledDataset out(spec.num_classes, spec.feature_dim, provenance);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
  rng.shuffle(labels);
  modes.clear();
  modes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    std::vector<double> weights;
    if (use_validation_weights) {
      weights = spec.validation_weights[c];
    } else {
      for (const auto& m : spec.modes[c]) weights.push_back(m.weight);
    }
    const int m = draw_mode(rng, weights);
    const Mode& mode = spec.modes[c][static_cast<std::size_t>(m)];
    out.add(mode.mean + mode.scale * rng.normal_vector(spec.feature_dim), labels[i]);
    modes.push_back(m);
  }
  return out;
}

}  // namespace

void TaskSpec::validate() const {
  if (num_classes <= 0) throw ValidationError("task: num_classes must be positive");
  if (feature_dim <= 0) throw ValidationError("task: feature_dim must be positive");
  if (modes.size() != static_cast<std::size_t>(num_classes))
    throw ValidationError("task: expected modes for every class");
  if (validation_weights.size() != modes.size())
    throw ValidationError("task: expected validation weights for every class");
  if (!(label_noise >= 0.0 && label_noise <= 1.0))
    throw ValidationError("task: label noise must lie in [0, 1]");
  for (std::size_t c = 0; c < modes.size(); ++c) {
    const std::string where = "task class " + std::to_string(c);
    if (modes[c].empty()) throw ValidationError(where + ": no modes");
    std::vector<double> w;
    for (const auto& m : modes[c]) {
      if (m.mean.size() != feature_dim) throw ValidationError(where + ": mode mean has wrong dimension");
      if (!(m.scale > 0.0)) throw ValidationError(where + ": covariance scale must be positive");
      w.push_back(m.weight);
    }
    check_weights(w, where);
    if (validation_weights[c].size() != modes[c].size())
      throw ValidationError(where + ": validation composition has wrong length");
    check_weights(validation_weights[c], where + " validation");
  }
}

SplitBundle make_synthetic_task(const TaskSpec& spec, const SplitSizes& sizes, std::uint64_t seed) {
  spec.validate();
  if (sizes.train == 0 || sizes.validation == 0 || sizes.test == 0)
    throw ValidationError("task: split sizes must be positive");

  SplitBundle b;
  Rng train_rng(seed, "train");
  Rng val_rng(seed, "validation");
  Rng test_rng(seed, "test");
  b.real_train = draw_split(spec, sizes.train, Provenance::kReal, false, train_rng, b.train_modes);
  b.validation = draw_split(spec, sizes.validation, Provenance::kValidation, true, val_rng, b.validation_modes);
  b.test = draw_split(spec, sizes.test, Provenance::kTest, true, test_rng, b.test_modes);

  b.clean_train_labels = b.real_train.labels();
  if (spec.label_noise > 0.0 && spec.num_classes > 1) {
    Rng noise_rng(seed, "train_noise");
    for (std::size_t i = 0; i < b.real_train.size(); ++i) {
      const double u = noise_rng.uniform();
      const auto shift = 1 + noise_rng.index(static_cast<std::size_t>(spec.num_classes - 1));
      if (u < spec.label_noise) {
        const int flipped = static_cast<int>((static_cast<std::size_t>(b.real_train[i].label) + shift) %
                                             static_cast<std::size_t>(spec.num_classes));
        b.real_train.set_label(i, flipped);
        b.flipped.push_back(i);
      }
    }
  }
  return b;
}

int nearest_mode(const TaskSpec& spec, int label, const Eigen::VectorXd& x) {
  const auto& modes = spec.modes.at(static_cast<std::size_t>(label));
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const double d = (x - modes[m].mean).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(m);
    }
  }
  return best;
}

std::vector<std::vector<double>> mode_fractions(const TaskSpec& spec, const LabeledDataset& data) {
  std::vector<std::vector<double>> frac(spec.modes.size());
  std::vector<double> totals(spec.modes.size(), 0.0);
  for (std::size_t c = 0; c < spec.modes.size(); ++c) frac[c].assign(spec.modes[c].size(), 0.0);
  for (const auto& s : data.samples()) {
    const auto c = static_cast<std::size_t>(s.label);
    frac[c][static_cast<std::size_t>(nearest_mode(spec, s.label, s.features))] += 1.0;
    totals[c] += 1.0;
  }
  for (std::size_t c = 0; c < frac.size(); ++c)
    if (totals[c] > 0.0)
      for (auto& v : frac[c]) v /= totals[c];
  return frac;
}

TaskSpec conflict_task(int num_classes, int feature_dim, double train_a_weight,
                       double validation_a_weight, double radius, double scale, double offset) {
  if (feature_dim < 2) throw ValidationError("conflict task needs feature_dim >= 2");
  TaskSpec spec;
  spec.num_classes = num_classes;
  spec.feature_dim = feature_dim;
  // Class k's pair site sits at angle 2*pi*k/K; the two modes sharing a site
  // are split tangentially by `offset`, mirror-symmetric about the site.
  auto location = [&](int k, double shift) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / num_classes + shift / radius;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(feature_dim);
    v[0] = radius * std::cos(angle);
    v[1] = radius * std::sin(angle);
    return v;
  };
  for (int c = 0; c < num_classes; ++c) {
    const int previous = (c + num_classes - 1) % num_classes;
    Mode a{location(c, -offset / 2.0), scale, train_a_weight};
    // Mode B of class c shares the site of class c-1's mode A.
    Mode b{location(previous, offset / 2.0), scale, 1.0 - train_a_weight};
    spec.modes.push_back({a, b});
    spec.validation_weights.push_back({validation_a_weight, 1.0 - validation_a_weight});
  }
  return spec;
}

TaskSpec gaussian_classes_task(int num_classes, int feature_dim, double separation, double scale,
                               double label_noise, std::uint64_t layout_seed) {
  TaskSpec spec;
  spec.num_classes = num_classes;
  spec.feature_dim = feature_dim;
  spec.label_noise = label_noise;
  Rng rng(layout_seed, "layout");
  for (int c = 0; c < num_classes; ++c) {
    Eigen::VectorXd mean = rng.normal_vector(feature_dim);
    mean *= separation / mean.norm();
    spec.modes.push_back({Mode{mean, scale, 1.0}});
    spec.validation_weights.push_back({1.0});
  }
  return spec;
}

}  // namespace utilgen
