#include "utilgen/nn/mlp.hpp"

#include <cmath>

#include "utilgen/core/error.hpp"

namespace utilgen::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSilu: return "silu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "silu") return Activation::kSilu;
  throw ParseError("unknown activation '" + s + "'");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kSilu: return z.unaryExpr([](double v) { return v * sigmoid(v); });
  }
  return z;
}

Eigen::MatrixXd activate_derivative(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::kRelu: return z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
    case Activation::kTanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::kSilu:
      return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
  }
  return z;
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

MlpGradients& MlpGradients::operator*=(double s) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] *= s;
    bias[l] *= s;
  }
  return *this;
}

double MlpGradients::dot(const MlpGradients& other) const {
  double acc = 0.0;
  for (std::size_t l = 0; l < weight.size(); ++l)
    acc += weight[l].cwiseProduct(other.weight[l]).sum() + bias[l].dot(other.bias[l]);
  return acc;
}

Mlp::Mlp(const std::vector<int>& widths, Activation hidden, Rng& rng) : hidden_(hidden) {
  if (widths.size() < 2) throw ValidationError("mlp needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Dense d;
    d.weight = rng.normal_matrix(widths[l + 1], widths[l]) / std::sqrt(static_cast<double>(widths[l]));
    d.bias = Eigen::VectorXd::Zero(widths[l + 1]);
    layers_.push_back(std::move(d));
  }
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w{input_dim()};
  for (const auto& l : layers_) w.push_back(static_cast<int>(l.weight.rows()));
  return w;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    const bool last = l + 1 == layers_.size();
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    h = last ? z : activate(hidden_, z);
  }
  return h;
}

Eigen::MatrixXd Mlp::penultimate(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    h = activate(hidden_, z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out, MlpGradients* grads,
                              std::vector<Eigen::MatrixXd>* deltas) const {
  if (grads) *grads = zero_gradients();
  if (deltas) deltas->assign(layers_.size(), Eigen::MatrixXd());
  Eigen::MatrixXd delta = grad_out;  // last layer is affine
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (grads) {
      grads->weight[l].noalias() = delta * cache.inputs[l].transpose();
      grads->bias[l] = delta.rowwise().sum();
    }
    Eigen::MatrixXd upstream = layers_[l].weight.transpose() * delta;
    if (deltas) (*deltas)[l] = std::move(delta);
    if (l == 0) return upstream;
    delta = upstream.cwiseProduct(activate_derivative(hidden_, cache.pre[l - 1]));
  }
  return {};
}

Eigen::VectorXd Mlp::per_sample_dot(const Cache& cache, const std::vector<Eigen::MatrixXd>& deltas,
                                    const MlpGradients& direction) const {
  const Eigen::Index n = deltas.front().cols();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Eigen::MatrixXd projected = direction.weight[l] * cache.inputs[l];
    out += projected.cwiseProduct(deltas[l]).colwise().sum().transpose();
    out += (deltas[l].transpose() * direction.bias[l]);
  }
  return out;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

Eigen::Index Mlp::num_params() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::VectorXd Mlp::flat() const {
  Eigen::VectorXd v(num_params());
  Eigen::Index o = 0;
  for (const auto& l : layers_) {
    v.segment(o, l.weight.size()) = l.weight.reshaped();
    o += l.weight.size();
    v.segment(o, l.bias.size()) = l.bias;
    o += l.bias.size();
  }
  return v;
}

void Mlp::set_flat(const Eigen::VectorXd& params) {
  if (params.size() != num_params()) throw ValidationError("mlp: flat parameter size mismatch");
  Eigen::Index o = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = params.segment(o, l.weight.size());
    o += l.weight.size();
    l.bias = params.segment(o, l.bias.size());
    o += l.bias.size();
  }
}

Eigen::VectorXd Mlp::flatten(const MlpGradients& g) const {
  Eigen::VectorXd v(num_params());
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    v.segment(o, g.weight[l].size()) = g.weight[l].reshaped();
    o += g.weight[l].size();
    v.segment(o, g.bias[l].size()) = g.bias[l];
    o += g.bias[l].size();
  }
  return v;
}

MlpGradients Mlp::unflatten(const Eigen::VectorXd& v) const {
  MlpGradients g = zero_gradients();
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    g.weight[l].reshaped() = v.segment(o, g.weight[l].size());
    o += g.weight[l].size();
    g.bias[l] = v.segment(o, g.bias[l].size());
    o += g.bias[l].size();
  }
  return g;
}

void Mlp::apply(const MlpGradients& g, double lr) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weight -= lr * g.weight[l];
    layers_[l].bias -= lr * g.bias[l];
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.hidden_ != b.hidden_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight.rows() != b.layers_[l].weight.rows() ||
        a.layers_[l].weight.cols() != b.layers_[l].weight.cols())
      return false;
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  }
  return true;
}

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++steps_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

MomentumSgd::MomentumSgd(Eigen::Index size, double momentum, double weight_decay)
    : velocity_(Eigen::VectorXd::Zero(size)), momentum_(momentum), weight_decay_(weight_decay) {}

void MomentumSgd::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (weight_decay_ != 0.0) {
    velocity_ = momentum_ * velocity_ + grad + weight_decay_ * params;
  } else {
    velocity_ = momentum_ * velocity_ + grad;
  }
  params -= lr * velocity_;
}

}  // namespace utilgen::nn
