#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/dataset.hpp"
#include "utilgen/todv/weight_net.hpp"

namespace utilgen::analysis {

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<long> counts;  // equal-width bins over [lo, hi]; out-of-range values go to the end bins
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;

  [[nodiscard]] long total() const;
};

Histogram make_histogram(const Eigen::VectorXd& values, int bins, double lo, double hi);

// Spearman rank correlation with average ranks for ties.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Multinomial L2-regularized logistic regression on [features; 1]:
///   (1/N) sum_i CE(W phi_i, y_i) + (reg/2) ||W||^2
/// The bias column is regularized with the rest so the Hessian is positive
/// definite whenever reg > 0.
struct ProbeConfig {
  double regularization = 1e-3;
  int max_newton_iters = 100;
  double tolerance = 1e-10;  // max-abs gradient at convergence
};

struct Probe {
  Eigen::MatrixXd weight;  // K x (F + 1)
  int iterations = 0;
};

// Probe inputs: the features with a trailing 1, one column per sample.
Eigen::MatrixXd probe_inputs(const Eigen::MatrixXd& features);

Probe fit_probe(const Eigen::MatrixXd& inputs, const std::vector<int>& labels, int num_classes,
                const ProbeConfig& config, const Probe* warm_start = nullptr);

double probe_mean_loss(const Probe& probe, const Eigen::MatrixXd& inputs, const std::vector<int>& labels);

struct InfluenceReport {
  Eigen::VectorXd scores;  // positive = helpful: up-weighting the sample lowers the mean test loss
  double positive_fraction = 0.0;
  Histogram histogram;
};

/// score_i = grad L_test^T H^-1 grad l_i at the fitted probe, H the exact
/// Hessian of the regularized training objective. Removing sample i changes
/// the mean test loss by roughly score_i / N. A non-positive-definite Hessian
/// throws NumericalError.
InfluenceReport influence_scores(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                                 const Eigen::MatrixXd& test_features, const std::vector<int>& test_labels,
                                 int num_classes, const ProbeConfig& config, int bins = 20);
// Features taken from the classifier's penultimate layer.
InfluenceReport influence_scores(const LabeledDataset& train, const LabeledDataset& test,
                                 const classifier::ClassifierState& feature_map, const ProbeConfig& config,
                                 int bins = 20);

inline constexpr std::size_t kLooMaxSamples = 500;

/// Exact leave-one-out: refit without sample i (keeping the 1/N normalization
/// of the full objective) and report L_test(without i) - L_test(all).
/// Positive = helpful, matching influence_scores.
Eigen::VectorXd loo_oracle(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                           const Eigen::MatrixXd& test_features, const std::vector<int>& test_labels, int num_classes,
                           const ProbeConfig& config);
Eigen::VectorXd loo_oracle(const LabeledDataset& train, const LabeledDataset& test,
                           const classifier::ClassifierState& feature_map, const ProbeConfig& config);

struct DiversityReport {
  std::vector<double> per_class;  // NaN for excluded classes
  std::vector<int> excluded;      // classes with fewer than 2 samples
  double mean = 0.0;              // over scored classes
};

// Mean pairwise cosine distance within each class of the given feature columns.
DiversityReport intra_class_diversity(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                      int num_classes);
DiversityReport intra_class_diversity(const LabeledDataset& data, const classifier::ClassifierState& feature_map);

struct WeightDistribution {
  std::string name;
  Eigen::VectorXd weights;
  Histogram histogram;
};

WeightDistribution weight_histogram(const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer,
                                    const LabeledDataset& data, const std::string& name, int bins = 20);
std::vector<WeightDistribution> weight_histogram(const todv::WeightNetParams& phi,
                                                 const classifier::ClassifierState& scorer,
                                                 const std::vector<std::pair<std::string, LabeledDataset>>& datasets,
                                                 int bins = 20);

}  // namespace utilgen::analysis
