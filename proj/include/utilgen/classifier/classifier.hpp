#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "utilgen/core/dataset.hpp"
#include "utilgen/nn/mlp.hpp"

namespace utilgen::classifier {

/// Downstream model f(x; theta): one tanh hidden layer then K logits.
/// Architecture tags: "mlp-small" (width 64) and "mlp-wide" (width 256).
struct ClassifierState {
  std::string architecture;
  nn::Mlp net;

  [[nodiscard]] int num_classes() const { return net.output_dim(); }
  [[nodiscard]] int feature_dim() const { return net.input_dim(); }
  [[nodiscard]] int hidden_width() const { return static_cast<int>(net.layers().front().weight.rows()); }
};

int hidden_width_for(const std::string& architecture);
ClassifierState make_classifier(const std::string& architecture, int feature_dim, int num_classes,
                                std::uint64_t seed);

/// Cross-entropy per column together with what backprop needs.
struct LossPass {
  Eigen::VectorXd losses;        // one per sample
  Eigen::MatrixXd logit_grads;   // d loss_i / d logits_i, K x B
  nn::Mlp::Cache cache;
};

LossPass loss_pass(const ClassifierState& state, const Eigen::MatrixXd& x, const std::vector<int>& labels);

// Cross-entropy from logits via log-sum-exp; each entry >= 0, order matches the batch.
Eigen::VectorXd per_sample_loss(const ClassifierState& state, const LabeledDataset& batch);
Eigen::VectorXd per_sample_loss(const ClassifierState& state, const Eigen::MatrixXd& x, const std::vector<int>& labels);

// Gradient of mean-over-batch sum_i w_i loss_i with respect to the parameters.
nn::MlpGradients weighted_loss_gradient(const ClassifierState& state, const Eigen::MatrixXd& x,
                                        const std::vector<int>& labels, const Eigen::VectorXd& weights);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
};

/// Mini-batch momentum SGD on (1/n) sum_i w_i L_i with a cosine learning-rate
/// schedule. `trajectory`, when given, receives the mean weighted loss of
/// every step.
ClassifierState train_weighted(ClassifierState state, const LabeledDataset& data, const Eigen::VectorXd& weights,
                               const TrainConfig& config, std::vector<double>* trajectory = nullptr);

// train_weighted with unit weights.
ClassifierState train(ClassifierState state, const LabeledDataset& data, const TrainConfig& config,
                      std::vector<double>* trajectory = nullptr);

// Penultimate-layer activations; stands in for an image encoder.
Eigen::VectorXd features(const ClassifierState& state, const Sample& x);
Eigen::MatrixXd features(const ClassifierState& state, const Eigen::MatrixXd& x);

std::vector<int> predict(const ClassifierState& state, const Eigen::MatrixXd& x);
double evaluate(const ClassifierState& state, const LabeledDataset& data);

void save_classifier(const std::filesystem::path& path, const ClassifierState& state, const std::string& config_hash);
ClassifierState load_classifier(const std::filesystem::path& path);

}  // namespace utilgen::classifier
