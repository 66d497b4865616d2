#include "utilgen/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

#include "utilgen/core/error.hpp"
#include "utilgen/mlco/mlco.hpp"

namespace utilgen::analysis {

long Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

Histogram make_histogram(const Eigen::VectorXd& values, int bins, double lo, double hi) {
  if (bins <= 0) throw ValidationError("make_histogram: bins must be positive");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (values.size() == 0) return h;
  for (const double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  h.mean = values.mean();
  h.stddev = std::sqrt((values.array() - h.mean).square().mean());
  h.min = values.minCoeff();
  h.max = values.maxCoeff();
  return h;
}

namespace {

Eigen::VectorXd ranks(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  Eigen::VectorXd r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

// Softmax probabilities, K x N.
Eigen::MatrixXd probabilities(const Eigen::MatrixXd& w, const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd z = w * inputs;
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    z.col(i).array() -= z.col(i).maxCoeff();
    z.col(i) = z.col(i).array().exp().matrix();
    z.col(i) /= z.col(i).sum();
  }
  return z;
}

Eigen::MatrixXd residuals(const Eigen::MatrixXd& p, const std::vector<int>& labels) {
  Eigen::MatrixXd r = p;
  for (std::size_t i = 0; i < labels.size(); ++i) r(labels[i], static_cast<Eigen::Index>(i)) -= 1.0;
  return r;
}

// Flat parameter index: class k, input f -> k * F + f (row-major W).
Eigen::VectorXd flatten(const Eigen::MatrixXd& w) {
  Eigen::VectorXd out(w.size());
  for (Eigen::Index k = 0; k < w.rows(); ++k) out.segment(k * w.cols(), w.cols()) = w.row(k).transpose();
  return out;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index k, Eigen::Index f) {
  Eigen::MatrixXd w(k, f);
  for (Eigen::Index c = 0; c < k; ++c) w.row(c) = v.segment(c * f, f).transpose();
  return w;
}

// Training objective pieces with optional per-sample mask (0 drops a sample,
// the 1/N normalization is kept).
struct Objective {
  const Eigen::MatrixXd& inputs;
  const std::vector<int>& labels;
  const Eigen::VectorXd& mask;
  int num_classes;
  double reg;

  [[nodiscard]] double value(const Eigen::MatrixXd& w) const {
    const Eigen::MatrixXd p = probabilities(w, inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (mask[static_cast<Eigen::Index>(i)] != 0.0)
        s -= mask[static_cast<Eigen::Index>(i)] *
             std::log(std::max(p(labels[i], static_cast<Eigen::Index>(i)), std::numeric_limits<double>::min()));
    return s / static_cast<double>(labels.size()) + 0.5 * reg * w.squaredNorm();
  }

  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::MatrixXd& w) const {
    const Eigen::MatrixXd r = residuals(probabilities(w, inputs), labels) * mask.asDiagonal();
    return flatten(r * inputs.transpose() / static_cast<double>(labels.size()) + reg * w);
  }

  [[nodiscard]] Eigen::MatrixXd hessian(const Eigen::MatrixXd& w) const {
    const Eigen::MatrixXd p = probabilities(w, inputs);
    const Eigen::Index f = inputs.rows();
    const auto k = static_cast<Eigen::Index>(num_classes);
    const double n = static_cast<double>(labels.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k * f, k * f);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = a; b < k; ++b) {
        Eigen::VectorXd c = -p.row(a).transpose().cwiseProduct(p.row(b).transpose());
        if (a == b) c += p.row(a).transpose();
        c = c.cwiseProduct(mask);
        const Eigen::MatrixXd block = inputs * c.asDiagonal() * inputs.transpose() / n;
        h.block(a * f, b * f, f, f) = block;
        if (a != b) h.block(b * f, a * f, f, f) = block.transpose();
      }
    }
    h.diagonal().array() += reg;
    return h;
  }
};

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& h) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13))
    throw NumericalError("probe Hessian is singular; use a nonzero probe regularization");
  return llt;
}

Probe fit_masked(const Eigen::MatrixXd& inputs, const std::vector<int>& labels, const Eigen::VectorXd& mask,
                 int num_classes, const ProbeConfig& config, const Probe* warm_start) {
  const Objective obj{inputs, labels, mask, num_classes, config.regularization};
  Probe probe;
  probe.weight = warm_start ? warm_start->weight : Eigen::MatrixXd::Zero(num_classes, inputs.rows());
  double value = obj.value(probe.weight);
  for (int it = 0; it < config.max_newton_iters; ++it) {
    const Eigen::VectorXd g = obj.gradient(probe.weight);
    if (g.lpNorm<Eigen::Infinity>() <= config.tolerance) return probe;
    const Eigen::VectorXd step = factor(obj.hessian(probe.weight)).solve(g);
    double t = 1.0;
    Eigen::MatrixXd next;
    double next_value = value;
    for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
      next = probe.weight - t * unflatten(step, num_classes, inputs.rows());
      next_value = obj.value(next);
      if (next_value <= value - 1e-4 * t * g.dot(step)) break;
    }
    if (!(next_value <= value)) break;  // no further decrease at working precision
    probe.weight = next;
    value = next_value;
    probe.iterations = it + 1;
  }
  return probe;
}

void check_inputs(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != y.size()) throw ValidationError(std::string(what) + ": label count mismatch");
  if (y.empty()) throw ValidationError(std::string(what) + ": empty set");
  for (const int label : y)
    if (label < 0 || label >= num_classes) throw RangeError(std::string(what) + ": label out of range");
}

}  // namespace

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("spearman: need two equal-length series");
  Eigen::VectorXd ra = ranks(a);
  Eigen::VectorXd rb = ranks(b);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  const double denom = ra.norm() * rb.norm();
  return denom == 0.0 ? 0.0 : ra.dot(rb) / denom;
}

Eigen::MatrixXd probe_inputs(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(features.rows() + 1, features.cols());
  out.topRows(features.rows()) = features;
  out.bottomRows(1).setOnes();
  return out;
}

Probe fit_probe(const Eigen::MatrixXd& inputs, const std::vector<int>& labels, int num_classes,
                const ProbeConfig& config, const Probe* warm_start) {
  check_inputs(inputs, labels, num_classes, "fit_probe");
  const Eigen::VectorXd mask = Eigen::VectorXd::Ones(inputs.cols());
  return fit_masked(inputs, labels, mask, num_classes, config, warm_start);
}

double probe_mean_loss(const Probe& probe, const Eigen::MatrixXd& inputs, const std::vector<int>& labels) {
  const Eigen::MatrixXd p = probabilities(probe.weight, inputs);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    s -= std::log(std::max(p(labels[i], static_cast<Eigen::Index>(i)), std::numeric_limits<double>::min()));
  return s / static_cast<double>(labels.size());
}

InfluenceReport influence_scores(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                                 const Eigen::MatrixXd& test_features, const std::vector<int>& test_labels,
                                 int num_classes, const ProbeConfig& config, int bins) {
  check_inputs(train_features, train_labels, num_classes, "influence_scores");
  check_inputs(test_features, test_labels, num_classes, "influence_scores");
  const Eigen::MatrixXd x = probe_inputs(train_features);
  const Eigen::MatrixXd xt = probe_inputs(test_features);
  const Eigen::VectorXd mask = Eigen::VectorXd::Ones(x.cols());
  const Objective obj{x, train_labels, mask, num_classes, config.regularization};
  const Probe probe = fit_masked(x, train_labels, mask, num_classes, config, nullptr);

  const Eigen::MatrixXd rt = residuals(probabilities(probe.weight, xt), test_labels);
  const Eigen::VectorXd test_grad = flatten(rt * xt.transpose() / static_cast<double>(test_labels.size()));
  const Eigen::VectorXd v = factor(obj.hessian(probe.weight)).solve(test_grad);
  const Eigen::MatrixXd vm = unflatten(v, num_classes, x.rows());

  // grad l_i = r_i x_i^T, so <v, grad l_i> = r_i^T V x_i.
  const Eigen::MatrixXd r = residuals(probabilities(probe.weight, x), train_labels);
  const Eigen::MatrixXd vx = vm * x;
  InfluenceReport report;
  report.scores = (r.array() * vx.array()).colwise().sum().transpose();
  report.positive_fraction =
      static_cast<double>((report.scores.array() > 0.0).count()) / static_cast<double>(report.scores.size());
  report.histogram = make_histogram(report.scores, bins, report.scores.minCoeff(), report.scores.maxCoeff());
  return report;
}

InfluenceReport influence_scores(const LabeledDataset& train, const LabeledDataset& test,
                                 const classifier::ClassifierState& feature_map, const ProbeConfig& config, int bins) {
  return influence_scores(classifier::features(feature_map, train.feature_matrix()), train.labels(),
                          classifier::features(feature_map, test.feature_matrix()), test.labels(),
                          train.num_classes(), config, bins);
}

Eigen::VectorXd loo_oracle(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                           const Eigen::MatrixXd& test_features, const std::vector<int>& test_labels, int num_classes,
                           const ProbeConfig& config) {
  if (train_labels.size() > kLooMaxSamples)
    throw ValidationError("loo_oracle: at most " + std::to_string(kLooMaxSamples) + " training samples");
  check_inputs(train_features, train_labels, num_classes, "loo_oracle");
  check_inputs(test_features, test_labels, num_classes, "loo_oracle");
  const Eigen::MatrixXd x = probe_inputs(train_features);
  const Eigen::MatrixXd xt = probe_inputs(test_features);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(x.cols());
  const Probe full = fit_masked(x, train_labels, mask, num_classes, config, nullptr);
  const double base = probe_mean_loss(full, xt, test_labels);

  Eigen::VectorXd deltas(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    mask[i] = 0.0;
    const Probe without = fit_masked(x, train_labels, mask, num_classes, config, &full);
    deltas[i] = probe_mean_loss(without, xt, test_labels) - base;
    mask[i] = 1.0;
  }
  return deltas;
}

Eigen::VectorXd loo_oracle(const LabeledDataset& train, const LabeledDataset& test,
                           const classifier::ClassifierState& feature_map, const ProbeConfig& config) {
  return loo_oracle(classifier::features(feature_map, train.feature_matrix()), train.labels(),
                    classifier::features(feature_map, test.feature_matrix()), test.labels(), train.num_classes(),
                    config);
}

DiversityReport intra_class_diversity(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                      int num_classes) {
  if (static_cast<std::size_t>(features.cols()) != labels.size())
    throw ValidationError("intra_class_diversity: label count mismatch");
  DiversityReport report;
  report.per_class.assign(static_cast<std::size_t>(num_classes), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int scored = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Eigen::VectorXd> unit;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      const Eigen::VectorXd f = features.col(static_cast<Eigen::Index>(i));
      const double n = f.norm();
      if (n == 0.0) warn("intra_class_diversity: zero feature vector in class " + std::to_string(c));
      unit.push_back(n == 0.0 ? f : Eigen::VectorXd(f / n));
    }
    if (unit.size() < 2) {
      warn("intra_class_diversity: class " + std::to_string(c) + " has fewer than 2 samples; excluded");
      report.excluded.push_back(c);
      continue;
    }
    double d = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < unit.size(); ++i)
      for (std::size_t j = i + 1; j < unit.size(); ++j, ++pairs) d += 1.0 - unit[i].dot(unit[j]);
    report.per_class[static_cast<std::size_t>(c)] = d / static_cast<double>(pairs);
    sum += report.per_class[static_cast<std::size_t>(c)];
    ++scored;
  }
  report.mean = scored > 0 ? sum / scored : std::numeric_limits<double>::quiet_NaN();
  return report;
}

DiversityReport intra_class_diversity(const LabeledDataset& data, const classifier::ClassifierState& feature_map) {
  return intra_class_diversity(classifier::features(feature_map, data.feature_matrix()), data.labels(),
                               data.num_classes());
}

WeightDistribution weight_histogram(const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer,
                                    const LabeledDataset& data, const std::string& name, int bins) {
  WeightDistribution out;
  out.name = name;
  out.weights = mlco::score_samples(phi, scorer, data);
  out.histogram = make_histogram(out.weights, bins, 0.0, 1.0);
  return out;
}

std::vector<WeightDistribution> weight_histogram(const todv::WeightNetParams& phi,
                                                 const classifier::ClassifierState& scorer,
                                                 const std::vector<std::pair<std::string, LabeledDataset>>& datasets,
                                                 int bins) {
  std::vector<WeightDistribution> out;
  out.reserve(datasets.size());
  for (const auto& [name, data] : datasets) out.push_back(weight_histogram(phi, scorer, data, name, bins));
  return out;
}

}  // namespace utilgen::analysis
