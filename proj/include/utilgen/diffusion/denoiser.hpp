#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "utilgen/core/dataset.hpp"
#include "utilgen/diffusion/schedule.hpp"
#include "utilgen/nn/mlp.hpp"

namespace utilgen::diffusion {

struct DenoiserConfig {
  int hidden_width = 128;
  int time_dim = 32;
  int cond_dim = 16;
};

/// Learned class identifier: the condition embedding fed to the denoiser.
struct ClassToken {
  int class_id = 0;
  Eigen::VectorXd embedding;
};

/// Noise predictor eps(x_t, t, c): a 3-layer SiLU network over the
/// concatenation [x_t; sinusoidal(t); c]. Also owns the learned null token
/// used for the unconditional branch of classifier-free guidance.
class Denoiser {
 public:
  struct InputGradients {
    Eigen::MatrixXd x;     // D x B
    Eigen::MatrixXd cond;  // C x B
  };

  Denoiser() = default;
  Denoiser(int feature_dim, int total_steps, const DenoiserConfig& config, Rng& rng);
  Denoiser(nn::Mlp net, Eigen::VectorXd null_token, int feature_dim, int time_dim, int total_steps);

  [[nodiscard]] Eigen::MatrixXd predict(const Eigen::MatrixXd& x, const std::vector<int>& t,
                                        const Eigen::MatrixXd& cond, nn::Mlp::Cache* cache = nullptr) const;
  // Same timestep and condition for every column.
  [[nodiscard]] Eigen::MatrixXd predict(const Eigen::MatrixXd& x, int t, const Eigen::VectorXd& cond,
                                        nn::Mlp::Cache* cache = nullptr) const;

  InputGradients backward(const nn::Mlp::Cache& cache, const Eigen::MatrixXd& grad_out,
                          nn::MlpGradients* grads) const;

  [[nodiscard]] Eigen::VectorXd time_embedding(int t) const;

  [[nodiscard]] const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }
  [[nodiscard]] const Eigen::VectorXd& null_token() const { return null_token_; }
  void set_null_token(Eigen::VectorXd token) { null_token_ = std::move(token); }
  [[nodiscard]] int feature_dim() const { return feature_dim_; }
  [[nodiscard]] int time_dim() const { return time_dim_; }
  [[nodiscard]] int cond_dim() const { return static_cast<int>(null_token_.size()); }
  [[nodiscard]] int total_steps() const { return total_steps_; }

  friend bool operator==(const Denoiser& a, const Denoiser& b);

 private:
  [[nodiscard]] Eigen::MatrixXd assemble(const Eigen::MatrixXd& x, const std::vector<int>& t,
                                         const Eigen::MatrixXd& cond) const;

  nn::Mlp net_;
  Eigen::VectorXd null_token_;
  int feature_dim_ = 0;
  int time_dim_ = 0;
  int total_steps_ = 1;
};

/// Trainable denoiser plus the frozen reference copy used by preference tuning.
struct DenoiserState {
  Denoiser trainable;
  Denoiser reference;

  void snapshot_reference() { reference = trainable; }
};

struct DenoiserTrainingConfig {
  DenoiserConfig architecture;
  int steps = 3000;
  int batch_size = 128;
  double learning_rate = 2e-3;
  double cond_dropout = 0.1;
  std::uint64_t seed = 0;
};

struct DenoiserTrainingReport {
  std::vector<double> losses;  // mean squared error per step
  long null_condition_uses = 0;
  long condition_uses = 0;
};

/// Standard epsilon-prediction objective with condition dropout to the null
/// token. Tokens must cover every class present in `data`.
DenoiserState train_denoiser(const LabeledDataset& data, const std::vector<ClassToken>& tokens,
                             const NoiseSchedule& sched, const DenoiserTrainingConfig& config,
                             DenoiserTrainingReport* report = nullptr);

// Column matrix of conditions for a label vector.
Eigen::MatrixXd token_matrix(const std::vector<ClassToken>& tokens, const std::vector<int>& labels);
const ClassToken& token_for(const std::vector<ClassToken>& tokens, int class_id);

/// Initial class tokens: each class-mean feature vector mapped through a fixed
/// seeded projection into the condition width.
std::vector<ClassToken> initial_tokens(const LabeledDataset& data, int cond_dim, std::uint64_t seed);

/// Denoising loss of `cond` on `data`, estimated over a fixed set of
/// (t, eps) draws from `seed` so that repeated calls are comparable.
double denoising_loss(const Denoiser& model, const NoiseSchedule& sched, const LabeledDataset& data,
                      const Eigen::VectorXd& cond, int draws_per_sample, std::uint64_t seed);

}  // namespace utilgen::diffusion
