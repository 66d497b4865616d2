#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/task.hpp"
#include "utilgen/nn/mlp.hpp"
#include "utilgen/todv/weight_net.hpp"

namespace utilgen::todv {

struct TodvConfig {
  int max_iters = 3000;
  int hidden = 100;
  double classifier_lr = 0.01;  // real (momentum) update
  double virtual_lr = 0.01;     // one-step lookahead
  double meta_lr = 1e-3;
  int train_batch = 128;
  int val_batch = 128;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string architecture = "mlp-small";
  std::uint64_t seed = 0;

  void validate() const;
};

/// theta' = theta - lr * grad (1/n) sum_i W(l_i) l_i, with l_i taken at theta.
classifier::ClassifierState virtual_classifier_step(const classifier::ClassifierState& theta,
                                                    const WeightNetParams& phi, const Eigen::MatrixXd& x,
                                                    const std::vector<int>& labels, double lr);

struct MetaGradient {
  Eigen::VectorXd gradient;     // d validation loss / d flat(phi)
  double validation_loss = 0.0;  // at theta'(phi)
  Eigen::VectorXd weights;      // W(l_i) on the training batch
};

/// Exact gradient of the mean validation loss at theta'(phi) with respect to
/// phi. Because the losses fed to W are evaluated at theta, d theta'/d W_i is
/// -(lr/n) g_i, so the gradient is sum_i -(lr/n) <g_i, v> dW_i/dphi with v the
/// validation gradient at theta'.
MetaGradient meta_gradient(const WeightNetParams& phi, const classifier::ClassifierState& theta,
                           const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                           const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, double virtual_lr);

// Mean validation cross-entropy after the virtual step (finite-difference target).
double lookahead_validation_loss(const WeightNetParams& phi, const classifier::ClassifierState& theta,
                                 const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                                 const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, double virtual_lr);

// One Adam step on phi along meta_gradient.
WeightNetParams meta_update(const WeightNetParams& phi, const classifier::ClassifierState& theta,
                            const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                            const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, double virtual_lr,
                            nn::Adam& optimizer);

struct EpochMetrics {
  int epoch = 0;
  int iteration = 0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double mean_weight = 0.0;
};

struct TodvResult {
  WeightNetParams phi;
  classifier::ClassifierState classifier;
  std::vector<EpochMetrics> log;
};

/// Alternating bi-level loop over real_train + warmup: sample a training and
/// a validation batch, weight the training batch with phi, take a momentum
/// step on theta, and move phi along the gradient of the validation loss
/// through the lookahead taken from the same theta.
TodvResult run_todv(const SplitBundle& bundle, const LabeledDataset& synthetic_warmup, const TodvConfig& config);

}  // namespace utilgen::todv
