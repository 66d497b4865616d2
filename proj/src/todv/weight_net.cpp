#include "utilgen/todv/weight_net.hpp"

#include <cmath>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"
#include "utilgen/nn/mlp.hpp"
#include "utilgen/nn/serialize.hpp"

namespace utilgen::todv {

WeightNetParams WeightNetParams::zeros(int hidden) {
  return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden), 0.0};
}

WeightNetParams WeightNetParams::initial(int hidden, std::uint64_t seed) {
  Rng rng(seed, "weight_net_init");
  WeightNetParams p = zeros(hidden);
  p.w1 = rng.normal_vector(hidden);
  p.b1 = rng.normal_vector(hidden);
  return p;
}

Eigen::VectorXd WeightNetParams::flat() const {
  const int h = hidden();
  Eigen::VectorXd v(3 * h + 1);
  v << w1, b1, w2, b2;
  return v;
}

void WeightNetParams::set_flat(const Eigen::VectorXd& v) {
  const int h = hidden();
  if (v.size() != 3 * h + 1) throw ValidationError("weight net: flat parameter size mismatch");
  w1 = v.segment(0, h);
  b1 = v.segment(h, h);
  w2 = v.segment(2 * h, h);
  b2 = v[3 * h];
}

Eigen::VectorXd predict_weights(const WeightNetParams& phi, const Eigen::VectorXd& losses) {
  Eigen::VectorXd out(losses.size());
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    const double l = losses[i];
    if (!std::isfinite(l)) throw ValidationError("predict_weights: non-finite loss");
    if (l < 0.0) throw ValidationError("predict_weights: negative loss");
    const Eigen::VectorXd h = (phi.w1 * l + phi.b1).cwiseMax(0.0);
    out[i] = nn::sigmoid(phi.w2.dot(h) + phi.b2);
  }
  return out;
}

Eigen::VectorXd weight_net_gradient(const WeightNetParams& phi, const Eigen::VectorXd& losses,
                                    const Eigen::VectorXd& upstream) {
  const int h = phi.hidden();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * h + 1);
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    const double l = losses[i];
    const Eigen::VectorXd z = phi.w1 * l + phi.b1;
    const Eigen::VectorXd a = z.cwiseMax(0.0);
    const double s = nn::sigmoid(phi.w2.dot(a) + phi.b2);
    const double d_out = upstream[i] * s * (1.0 - s);
    const Eigen::VectorXd d_z = (d_out * phi.w2).cwiseProduct(z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }));
    g.segment(0, h) += d_z * l;
    g.segment(h, h) += d_z;
    g.segment(2 * h, h) += d_out * a;
    g[3 * h] += d_out;
  }
  return g;
}

void save_weight_net(const std::filesystem::path& path, const WeightNetParams& phi, const std::string& config_hash) {
  nn::write_checkpoint(path, "weight_net", config_hash,
                       {{"w1", nn::to_json(phi.w1)},
                        {"b1", nn::to_json(phi.b1)},
                        {"w2", nn::to_json(phi.w2)},
                        {"b2", phi.b2}});
}

WeightNetParams load_weight_net(const std::filesystem::path& path) {
  const auto p = nn::read_checkpoint(path, "weight_net");
  try {
    WeightNetParams phi{nn::vector_from_json(p.at("w1")), nn::vector_from_json(p.at("b1")),
                        nn::vector_from_json(p.at("w2")), p.at("b2").get<double>()};
    if (phi.b1.size() != phi.w1.size() || phi.w2.size() != phi.w1.size())
      throw ParseError(path.string() + ": inconsistent weight-net blocks");
    return phi;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace utilgen::todv
