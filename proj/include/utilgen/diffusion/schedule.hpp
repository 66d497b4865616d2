#pragma once

#include <vector>

#include <Eigen/Core>

namespace utilgen::diffusion {

/// Cumulative signal fractions alpha_bar[t] for t = 0..T, with alpha_bar[0] = 1
/// standing for the clean sample.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> alpha_bar);  // alpha_bar[0] must be 1

  // beta_t linear in t over [beta_start, beta_end], t = 1..T.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  [[nodiscard]] int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  [[nodiscard]] double alpha_bar(int t) const;
  [[nodiscard]] double alpha(int t) const;  // alpha_bar(t) / alpha_bar(t-1)
  [[nodiscard]] double snr(int t) const;    // alpha_bar / (1 - alpha_bar)
  [[nodiscard]] const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  /// Descending DDIM timesteps for a chain of `count` network evaluations:
  /// round(i * T / count) for i = count..1. count == T visits every step.
  [[nodiscard]] std::vector<int> sampling_timesteps(int count) const;

  // Throws ValidationError unless alpha_bar is strictly decreasing within (0, 1].
  void validate() const;

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::vector<double> alpha_bar_{1.0};
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for 1 <= t <= T.
Eigen::VectorXd forward_noising(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                                const NoiseSchedule& sched);
Eigen::MatrixXd forward_noising(const Eigen::MatrixXd& x0, const std::vector<int>& t,
                                const Eigen::MatrixXd& eps, const NoiseSchedule& sched);

}  // namespace utilgen::diffusion
