#pragma once

#include <vector>

#include <Eigen/Core>

#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/schedule.hpp"

namespace utilgen::diffusion {

/// Classifier-free guidance: (1 - omega) eps_uncond + omega eps_cond.
/// Branches with a zero coefficient are not evaluated, so omega = 0 and
/// omega = 1 return the plain unconditional / conditional predictions.
Eigen::MatrixXd cfg_epsilon(const Denoiser& model, const Eigen::MatrixXd& x, int t, const Eigen::VectorXd& cond,
                            double omega);

/// Deterministic (eta = 0) DDIM from x_T = noise down to x_0 over
/// `chain_steps` evaluations (0 means every timestep). Columns are samples.
Eigen::MatrixXd ddim_sample(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& noise,
                            const Eigen::VectorXd& cond, double omega, int chain_steps = 0);

/// Reverse-time DDIM: x_0 back to x_T. Each step from s up to t uses
/// eps(x_s, t), the usual first-order approximation of eps(x_t, t).
/// `refinements` > 0 re-evaluates eps at the current estimate of x_t that many
/// times, converging to the exact inverse of the sampling step.
Eigen::MatrixXd ddim_invert(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& x0,
                            const Eigen::VectorXd& cond, double omega, int chain_steps = 0, int refinements = 0);

/// DDIM sampling that records its intermediate states so the output can be
/// differentiated with respect to the initial noise and the condition.
/// The null token and the network weights are treated as constants.
class DdimChain {
 public:
  struct Gradients {
    Eigen::MatrixXd noise;  // D x B
    Eigen::VectorXd cond;   // summed over the batch
  };

  DdimChain(const Denoiser& model, const NoiseSchedule& sched, double omega, int chain_steps);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& noise, const Eigen::VectorXd& cond);
  [[nodiscard]] Gradients backward(const Eigen::MatrixXd& grad_x0) const;

 private:
  struct Step {
    int t = 0;
    double keep = 0.0;  // coefficient on x_t
    double mix = 0.0;   // coefficient on the guided epsilon
    nn::Mlp::Cache cond_cache;
    nn::Mlp::Cache uncond_cache;
  };

  const Denoiser& model_;
  const NoiseSchedule& sched_;
  double omega_;
  std::vector<int> timesteps_;
  std::vector<Step> tape_;
};

}  // namespace utilgen::diffusion
