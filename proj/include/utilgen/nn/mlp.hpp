#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "utilgen/core/random.hpp"

namespace utilgen::nn {

enum class Activation { kIdentity, kRelu, kTanh, kSilu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z);
// d activation / d z evaluated at z.
Eigen::MatrixXd activate_derivative(Activation a, const Eigen::MatrixXd& z);

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Per-layer parameter gradients, same shapes as the network's layers.
struct MlpGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  MlpGradients& operator+=(const MlpGradients& other);
  MlpGradients& operator*=(double s);
  [[nodiscard]] double dot(const MlpGradients& other) const;
};

/// Feed-forward network; samples are columns. Hidden layers use `hidden`,
/// the final layer is affine.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  // Weights ~ N(0, 1/fan_in), biases zero.
  Mlp(const std::vector<int>& widths, Activation hidden, Rng& rng);

  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

  // Hidden activation of the last hidden layer (the network's penultimate features).
  [[nodiscard]] Eigen::MatrixXd penultimate(const Eigen::MatrixXd& x) const;

  /// Backpropagates `grad_out` (dL/d output, one column per sample).
  /// Returns dL/d input. When `grads` is set, parameter gradients summed over
  /// the batch are written into it. When `deltas` is set, the per-sample
  /// pre-activation gradients of every layer are kept.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& grad_out, MlpGradients* grads,
                           std::vector<Eigen::MatrixXd>* deltas = nullptr) const;

  /// For every sample i, <g_i, direction> where g_i is the parameter gradient
  /// produced by column i of `deltas` (as returned by backward).
  [[nodiscard]] Eigen::VectorXd per_sample_dot(const Cache& cache, const std::vector<Eigen::MatrixXd>& deltas,
                                               const MlpGradients& direction) const;

  [[nodiscard]] MlpGradients zero_gradients() const;
  [[nodiscard]] Eigen::Index num_params() const;
  [[nodiscard]] Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& params);
  [[nodiscard]] Eigen::VectorXd flatten(const MlpGradients& g) const;
  [[nodiscard]] MlpGradients unflatten(const Eigen::VectorXd& v) const;

  // Applies params -= lr * g.
  void apply(const MlpGradients& g, double lr);

  [[nodiscard]] const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& layers() { return layers_; }
  [[nodiscard]] Activation hidden_activation() const { return hidden_; }
  [[nodiscard]] int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  [[nodiscard]] int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  [[nodiscard]] std::vector<int> widths() const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Dense> layers_;
  Activation hidden_ = Activation::kRelu;
};

/// Adam on a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  [[nodiscard]] double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  Eigen::VectorXd m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long steps_ = 0;
};

/// Heavy-ball SGD with coupled weight decay: v = mu v + (g + wd p); p -= lr v.
class MomentumSgd {
 public:
  MomentumSgd() = default;
  MomentumSgd(Eigen::Index size, double momentum, double weight_decay);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

 private:
  Eigen::VectorXd velocity_;
  double momentum_ = 0.9, weight_decay_ = 0.0;
};

// Numerically stable log(1 + exp(x)) and sigmoid.
double softplus(double x);
double sigmoid(double x);

}  // namespace utilgen::nn
