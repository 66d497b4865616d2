#include "utilgen/todv/todv.hpp"

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"

namespace utilgen::todv {

using classifier::ClassifierState;

void TodvConfig::validate() const {
  if (max_iters < 0) throw ConfigError("todv.max_iters must be non-negative");
  if (hidden <= 0 || train_batch <= 0 || val_batch <= 0) throw ConfigError("todv: sizes must be positive");
  if (!(classifier_lr > 0 && virtual_lr > 0 && meta_lr >= 0)) throw ConfigError("todv: learning rates must be positive");
}

ClassifierState virtual_classifier_step(const ClassifierState& theta, const WeightNetParams& phi,
                                        const Eigen::MatrixXd& x, const std::vector<int>& labels, double lr) {
  const auto losses = classifier::per_sample_loss(theta, x, labels);
  const auto grad = classifier::weighted_loss_gradient(theta, x, labels, predict_weights(phi, losses));
  ClassifierState out = theta;
  out.net.apply(grad, lr);
  return out;
}

double lookahead_validation_loss(const WeightNetParams& phi, const ClassifierState& theta,
                                 const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                                 const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, double virtual_lr) {
  const auto stepped = virtual_classifier_step(theta, phi, train_x, train_y, virtual_lr);
  return classifier::per_sample_loss(stepped, val_x, val_y).mean();
}

MetaGradient meta_gradient(const WeightNetParams& phi, const ClassifierState& theta, const Eigen::MatrixXd& train_x,
                           const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                           const std::vector<int>& val_y, double virtual_lr) {
  if (train_x.cols() == 0 || val_x.cols() == 0) throw ValidationError("meta_gradient: empty batch");
  const auto n = static_cast<double>(train_x.cols());

  // Per-sample training gradients at theta, kept as layer deltas.
  const auto pass = classifier::loss_pass(theta, train_x, train_y);
  std::vector<Eigen::MatrixXd> deltas;
  theta.net.backward(pass.cache, pass.logit_grads, nullptr, &deltas);

  MetaGradient out;
  out.weights = predict_weights(phi, pass.losses);
  nn::MlpGradients weighted;
  theta.net.backward(pass.cache, pass.logit_grads * (out.weights / n).asDiagonal(), &weighted);
  ClassifierState stepped = theta;
  stepped.net.apply(weighted, virtual_lr);

  const auto val_pass = classifier::loss_pass(stepped, val_x, val_y);
  out.validation_loss = val_pass.losses.mean();
  nn::MlpGradients val_grad;
  stepped.net.backward(val_pass.cache, val_pass.logit_grads / static_cast<double>(val_x.cols()), &val_grad);

  const Eigen::VectorXd alignment = theta.net.per_sample_dot(pass.cache, deltas, val_grad);
  const Eigen::VectorXd upstream = -(virtual_lr / n) * alignment;
  out.gradient = weight_net_gradient(phi, pass.losses, upstream);
  return out;
}

WeightNetParams meta_update(const WeightNetParams& phi, const ClassifierState& theta, const Eigen::MatrixXd& train_x,
                            const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                            const std::vector<int>& val_y, double virtual_lr, nn::Adam& optimizer) {
  const auto mg = meta_gradient(phi, theta, train_x, train_y, val_x, val_y, virtual_lr);
  Eigen::VectorXd params = phi.flat();
  optimizer.step(params, mg.gradient);
  WeightNetParams out = phi;
  out.set_flat(params);
  return out;
}

TodvResult run_todv(const SplitBundle& bundle, const LabeledDataset& synthetic_warmup, const TodvConfig& config) {
  config.validate();
  if (bundle.validation.empty()) throw ConfigError("run_todv: empty validation set");
  const LabeledDataset merged = bundle.real_train.merged_with(synthetic_warmup);
  if (merged.empty()) throw ConfigError("run_todv: empty training set");

  TodvResult result;
  result.phi = WeightNetParams::initial(config.hidden, config.seed);
  result.classifier = classifier::make_classifier(config.architecture, merged.feature_dim(), merged.num_classes(),
                                                  config.seed);
  if (config.max_iters == 0) return result;

  const Eigen::MatrixXd x = merged.feature_matrix();
  const std::vector<int> y = merged.labels();
  const Eigen::MatrixXd vx = bundle.validation.feature_matrix();
  const std::vector<int> vy = bundle.validation.labels();

  Rng train_rng(config.seed, "todv/train_batches");
  Rng val_rng(config.seed, "todv/val_batches");
  nn::Adam meta_opt(3 * config.hidden + 1, config.meta_lr);
  nn::MomentumSgd opt(result.classifier.net.num_params(), config.momentum, config.weight_decay);
  Eigen::VectorXd theta = result.classifier.net.flat();

  const auto n = merged.size();
  const auto b = std::min<std::size_t>(static_cast<std::size_t>(config.train_batch), n);
  const auto vb = static_cast<std::size_t>(config.val_batch);
  const int iters_per_epoch = static_cast<int>((n + b - 1) / b);
  std::vector<std::size_t> order = train_rng.permutation(n);
  std::size_t cursor = 0;
  double weight_sum = 0.0;
  long weight_count = 0;

  for (int it = 0; it < config.max_iters; ++it) {
    if (cursor + b > n) {
      order = train_rng.permutation(n);
      cursor = 0;
    }
    Eigen::MatrixXd bx(x.rows(), static_cast<Eigen::Index>(b));
    std::vector<int> by(b);
    for (std::size_t i = 0; i < b; ++i) {
      bx.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(order[cursor + i]));
      by[i] = y[order[cursor + i]];
    }
    cursor += b;
    const auto vidx = val_rng.sample_indices(bundle.validation.size(), vb);
    Eigen::MatrixXd bvx(vx.rows(), static_cast<Eigen::Index>(vb));
    std::vector<int> bvy(vb);
    for (std::size_t i = 0; i < vb; ++i) {
      bvx.col(static_cast<Eigen::Index>(i)) = vx.col(static_cast<Eigen::Index>(vidx[i]));
      bvy[i] = vy[vidx[i]];
    }

    // Weights from the current phi drive the real classifier step.
    const auto pass = classifier::loss_pass(result.classifier, bx, by);
    const Eigen::VectorXd w = predict_weights(result.phi, pass.losses);
    weight_sum += w.sum();
    weight_count += w.size();
    nn::MlpGradients g;
    result.classifier.net.backward(pass.cache, pass.logit_grads * (w / static_cast<double>(b)).asDiagonal(), &g);

    if (config.meta_lr > 0.0) {
      result.phi = meta_update(result.phi, result.classifier, bx, by, bvx, bvy, config.virtual_lr, meta_opt);
    }

    opt.step(theta, result.classifier.net.flatten(g), config.classifier_lr);
    result.classifier.net.set_flat(theta);

    if ((it + 1) % iters_per_epoch == 0 || it + 1 == config.max_iters) {
      EpochMetrics m;
      m.epoch = static_cast<int>(result.log.size()) + 1;
      m.iteration = it + 1;
      m.train_accuracy = classifier::evaluate(result.classifier, merged);
      m.validation_accuracy = classifier::evaluate(result.classifier, bundle.validation);
      m.mean_weight = weight_count > 0 ? weight_sum / static_cast<double>(weight_count) : 0.0;
      result.log.push_back(m);
      weight_sum = 0.0;
      weight_count = 0;
    }
  }
  return result;
}

}  // namespace utilgen::todv
