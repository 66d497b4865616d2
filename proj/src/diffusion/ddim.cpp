#include "utilgen/diffusion/ddim.hpp"

#include <cmath>

#include "utilgen/core/error.hpp"

namespace utilgen::diffusion {

namespace {

// x_to = keep * x_from + mix * eps for a deterministic DDIM move between
// signal levels ab_from and ab_to (either direction).
struct Coefficients {
  double keep;
  double mix;
};

Coefficients ddim_coefficients(double ab_from, double ab_to) {
  const double ratio = std::sqrt(ab_to / ab_from);
  return {ratio, std::sqrt(1.0 - ab_to) - ratio * std::sqrt(1.0 - ab_from)};
}

int resolve_chain(const NoiseSchedule& sched, int chain_steps) {
  return chain_steps <= 0 ? sched.steps() : chain_steps;
}

void check_inputs(const Denoiser& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& cond) {
  if (x.rows() != model.feature_dim()) throw ValidationError("ddim: sample dimension mismatch");
  if (cond.size() != model.cond_dim()) throw ValidationError("ddim: condition dimension mismatch");
}

}  // namespace

Eigen::MatrixXd cfg_epsilon(const Denoiser& model, const Eigen::MatrixXd& x, int t, const Eigen::VectorXd& cond,
                            double omega) {
  check_inputs(model, x, cond);
  if (omega == 0.0) return model.predict(x, t, model.null_token());
  if (omega == 1.0) return model.predict(x, t, cond);
  return (1.0 - omega) * model.predict(x, t, model.null_token()) + omega * model.predict(x, t, cond);
}

Eigen::MatrixXd ddim_sample(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& noise,
                            const Eigen::VectorXd& cond, double omega, int chain_steps) {
  check_inputs(model, noise, cond);
  const auto ts = sched.sampling_timesteps(resolve_chain(sched, chain_steps));
  Eigen::MatrixXd x = noise;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    const auto c = ddim_coefficients(sched.alpha_bar(t), sched.alpha_bar(s));
    x = c.keep * x + c.mix * cfg_epsilon(model, x, t, cond, omega);
  }
  return x;
}

Eigen::MatrixXd ddim_invert(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& x0,
                            const Eigen::VectorXd& cond, double omega, int chain_steps, int refinements) {
  check_inputs(model, x0, cond);
  if (refinements < 0) throw ValidationError("ddim_invert: refinements must be non-negative");
  auto ts = sched.sampling_timesteps(resolve_chain(sched, chain_steps));
  Eigen::MatrixXd x = x0;
  for (std::size_t i = ts.size(); i-- > 0;) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    const auto c = ddim_coefficients(sched.alpha_bar(s), sched.alpha_bar(t));
    const Eigen::MatrixXd from = x;
    x = c.keep * from + c.mix * cfg_epsilon(model, from, t, cond, omega);
    // Fixed-point iterations on x_t = keep x_s + mix eps(x_t, t), the exact
    // inverse of the sampling step.
    for (int k = 0; k < refinements; ++k) x = c.keep * from + c.mix * cfg_epsilon(model, x, t, cond, omega);
  }
  return x;
}

DdimChain::DdimChain(const Denoiser& model, const NoiseSchedule& sched, double omega, int chain_steps)
    : model_(model), sched_(sched), omega_(omega), timesteps_(sched.sampling_timesteps(resolve_chain(sched, chain_steps))) {}

Eigen::MatrixXd DdimChain::forward(const Eigen::MatrixXd& noise, const Eigen::VectorXd& cond) {
  check_inputs(model_, noise, cond);
  tape_.clear();
  tape_.reserve(timesteps_.size());
  Eigen::MatrixXd x = noise;
  for (std::size_t i = 0; i < timesteps_.size(); ++i) {
    Step step;
    step.t = timesteps_[i];
    const int s = i + 1 < timesteps_.size() ? timesteps_[i + 1] : 0;
    const auto c = ddim_coefficients(sched_.alpha_bar(step.t), sched_.alpha_bar(s));
    step.keep = c.keep;
    step.mix = c.mix;
    // Same association order as cfg_epsilon so both paths agree bit for bit.
    Eigen::MatrixXd eps;
    if (omega_ == 0.0) {
      eps = model_.predict(x, step.t, model_.null_token(), &step.uncond_cache);
    } else if (omega_ == 1.0) {
      eps = model_.predict(x, step.t, cond, &step.cond_cache);
    } else {
      eps = (1.0 - omega_) * model_.predict(x, step.t, model_.null_token(), &step.uncond_cache) +
            omega_ * model_.predict(x, step.t, cond, &step.cond_cache);
    }
    x = c.keep * x + c.mix * eps;
    tape_.push_back(std::move(step));
  }
  return x;
}

DdimChain::Gradients DdimChain::backward(const Eigen::MatrixXd& grad_x0) const {
  if (tape_.empty()) throw ConfigError("DdimChain::backward called before forward");
  Eigen::MatrixXd g = grad_x0;
  Eigen::VectorXd g_cond = Eigen::VectorXd::Zero(model_.cond_dim());
  for (std::size_t i = tape_.size(); i-- > 0;) {
    const Step& step = tape_[i];
    const Eigen::MatrixXd g_eps = step.mix * g;
    Eigen::MatrixXd g_x = step.keep * g;
    if (omega_ != 0.0) {
      const auto in = model_.backward(step.cond_cache, omega_ * g_eps, nullptr);
      g_x += in.x;
      g_cond += in.cond.rowwise().sum();
    }
    if (omega_ != 1.0) {
      const auto in = model_.backward(step.uncond_cache, (1.0 - omega_) * g_eps, nullptr);
      g_x += in.x;
    }
    g = std::move(g_x);
  }
  return {g, g_cond};
}

}  // namespace utilgen::diffusion
