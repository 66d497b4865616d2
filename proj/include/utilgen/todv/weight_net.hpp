#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

namespace utilgen::todv {

/// Loss-conditioned utility scorer W(l) = sigmoid(w2 . relu(w1 l + b1) + b2).
struct WeightNetParams {
  Eigen::VectorXd w1;  // 1 x H, stored as a vector
  Eigen::VectorXd b1;  // H
  Eigen::VectorXd w2;  // H x 1, stored as a vector
  double b2 = 0.0;

  [[nodiscard]] int hidden() const { return static_cast<int>(w1.size()); }

  static WeightNetParams zeros(int hidden);
  /// Random input layer, zero output layer: every weight starts at exactly 0.5.
  static WeightNetParams initial(int hidden, std::uint64_t seed);

  [[nodiscard]] Eigen::VectorXd flat() const;  // [w1; b1; w2; b2]
  void set_flat(const Eigen::VectorXd& v);

  friend bool operator==(const WeightNetParams&, const WeightNetParams&) = default;
};

// Elementwise weights in (0, 1). Non-finite or negative losses are rejected.
Eigen::VectorXd predict_weights(const WeightNetParams& phi, const Eigen::VectorXd& losses);

/// Gradient with respect to the flat parameters of sum_i upstream_i * W(l_i).
Eigen::VectorXd weight_net_gradient(const WeightNetParams& phi, const Eigen::VectorXd& losses,
                                    const Eigen::VectorXd& upstream);

void save_weight_net(const std::filesystem::path& path, const WeightNetParams& phi, const std::string& config_hash);
WeightNetParams load_weight_net(const std::filesystem::path& path);

}  // namespace utilgen::todv
