#include "utilgen/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "utilgen/core/error.hpp"

namespace utilgen::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
  validate();
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule needs at least one step");
  std::vector<double> ab{1.0};
  double acc = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    acc *= 1.0 - beta;
    ab.push_back(acc);
  }
  return NoiseSchedule(std::move(ab));
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps())
    throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > steps()) throw RangeError("alpha(t) needs 1 <= t <= T");
  return alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(t) - 1];
}

double NoiseSchedule::snr(int t) const {
  const double ab = alpha_bar(t);
  return ab / (1.0 - ab);
}

std::vector<int> NoiseSchedule::sampling_timesteps(int count) const {
  const int total = steps();
  if (count < 1 || count > total) throw RangeError("DDIM chain length must lie in [1, T]");
  std::vector<int> ts;
  for (int i = count; i >= 1; --i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(i) * total / count));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  return ts;
}

void NoiseSchedule::validate() const {
  if (alpha_bar_.size() < 2) throw ValidationError("schedule needs T >= 1");
  if (alpha_bar_.front() != 1.0) throw ValidationError("schedule must start at alpha_bar_0 = 1");
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] < alpha_bar_[t - 1]))
      throw ValidationError("alpha_bar must be strictly decreasing and positive (t=" + std::to_string(t) + ")");
  }
}

Eigen::VectorXd forward_noising(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                                const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps())
    throw RangeError("forward_noising: timestep " + std::to_string(t) + " outside [1, T]");
  if (x0.size() != eps.size()) throw ValidationError("forward_noising: shape mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::MatrixXd forward_noising(const Eigen::MatrixXd& x0, const std::vector<int>& t,
                                const Eigen::MatrixXd& eps, const NoiseSchedule& sched) {
  if (static_cast<std::size_t>(x0.cols()) != t.size() || x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw ValidationError("forward_noising: shape mismatch");
  Eigen::MatrixXd out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.cols(); ++i) {
    const int ti = t[static_cast<std::size_t>(i)];
    if (ti < 1 || ti > sched.steps()) throw RangeError("forward_noising: timestep outside [1, T]");
    const double ab = sched.alpha_bar(ti);
    out.col(i) = std::sqrt(ab) * x0.col(i) + std::sqrt(1.0 - ab) * eps.col(i);
  }
  return out;
}

}  // namespace utilgen::diffusion
