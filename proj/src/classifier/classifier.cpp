#include "utilgen/classifier/classifier.hpp"

#include <cmath>
#include <numbers>

#include "utilgen/core/error.hpp"
#include "utilgen/nn/serialize.hpp"

namespace utilgen::classifier {

int hidden_width_for(const std::string& architecture) {
  if (architecture == "mlp-small") return 64;
  if (architecture == "mlp-wide") return 256;
  throw ConfigError("unknown classifier architecture '" + architecture + "'");
}

ClassifierState make_classifier(const std::string& architecture, int feature_dim, int num_classes,
                                std::uint64_t seed) {
  Rng rng(seed, "classifier_init/" + architecture);
  return {architecture,
          nn::Mlp({feature_dim, hidden_width_for(architecture), num_classes}, nn::Activation::kTanh, rng)};
}

namespace {

void check_labels(const ClassifierState& state, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (x.cols() == 0) throw ValidationError("classifier: empty batch");
  if (static_cast<std::size_t>(x.cols()) != labels.size()) throw ValidationError("classifier: label count mismatch");
  if (x.rows() != state.feature_dim()) throw ValidationError("classifier: feature dimension mismatch");
  for (int y : labels)
    if (y < 0 || y >= state.num_classes())
      throw RangeError("classifier: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(state.num_classes()) + ")");
}

}  // namespace

LossPass loss_pass(const ClassifierState& state, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  check_labels(state, x, labels);
  LossPass out;
  const Eigen::MatrixXd logits = state.net.forward(x, &out.cache);
  const Eigen::Index n = logits.cols();
  out.losses.resize(n);
  out.logit_grads.resize(logits.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.col(i).maxCoeff();
    const Eigen::ArrayXd e = (logits.col(i).array() - m).exp();
    const double sum = e.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    out.losses[i] = std::max(0.0, m + std::log(sum) - logits(y, i));
    out.logit_grads.col(i) = (e / sum).matrix();
    out.logit_grads(y, i) -= 1.0;
  }
  return out;
}

Eigen::VectorXd per_sample_loss(const ClassifierState& state, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  return loss_pass(state, x, labels).losses;
}

Eigen::VectorXd per_sample_loss(const ClassifierState& state, const LabeledDataset& batch) {
  if (batch.empty()) throw ValidationError("per_sample_loss: empty batch");
  return per_sample_loss(state, batch.feature_matrix(), batch.labels());
}

nn::MlpGradients weighted_loss_gradient(const ClassifierState& state, const Eigen::MatrixXd& x,
                                        const std::vector<int>& labels, const Eigen::VectorXd& weights) {
  const LossPass pass = loss_pass(state, x, labels);
  const Eigen::VectorXd scale = weights / static_cast<double>(x.cols());
  nn::MlpGradients g;
  state.net.backward(pass.cache, pass.logit_grads * scale.asDiagonal(), &g);
  return g;
}

ClassifierState train_weighted(ClassifierState state, const LabeledDataset& data, const Eigen::VectorXd& weights,
                               const TrainConfig& config, std::vector<double>* trajectory) {
  if (static_cast<std::size_t>(weights.size()) != data.size())
    throw ValidationError("train_weighted: expected one weight per sample");
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
      throw ValidationError("train_weighted: weight " + std::to_string(i) + " outside [0, 1]");
  if (data.empty() || config.epochs <= 0) return state;

  const Eigen::MatrixXd x = data.feature_matrix();
  const std::vector<int> y = data.labels();
  const auto n = data.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;

  Rng rng(config.seed, "classifier_batches");
  nn::MomentumSgd opt(state.net.num_params(), config.momentum, config.weight_decay);
  Eigen::VectorXd params = state.net.flat();
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd xb(x.rows(), b);
      std::vector<int> yb(static_cast<std::size_t>(b));
      Eigen::VectorXd wb(b);
      for (Eigen::Index i = 0; i < b; ++i) {
        const std::size_t j = order[start + static_cast<std::size_t>(i)];
        xb.col(i) = x.col(static_cast<Eigen::Index>(j));
        yb[static_cast<std::size_t>(i)] = y[j];
        wb[i] = weights[static_cast<Eigen::Index>(j)];
      }
      const LossPass pass = loss_pass(state, xb, yb);
      if (trajectory) trajectory->push_back(wb.dot(pass.losses) / static_cast<double>(b));
      nn::MlpGradients g;
      state.net.backward(pass.cache, pass.logit_grads * (wb / static_cast<double>(b)).asDiagonal(), &g);
      const double lr = config.cosine_decay
                            ? 0.5 * config.learning_rate * (1.0 + std::cos(std::numbers::pi * step / total_steps))
                            : config.learning_rate;
      opt.step(params, state.net.flatten(g), lr);
      state.net.set_flat(params);
    }
  }
  return state;
}

ClassifierState train(ClassifierState state, const LabeledDataset& data, const TrainConfig& config,
                      std::vector<double>* trajectory) {
  return train_weighted(std::move(state), data, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(data.size())),
                        config, trajectory);
}

Eigen::VectorXd features(const ClassifierState& state, const Sample& x) {
  return state.net.penultimate(x.features);
}

Eigen::MatrixXd features(const ClassifierState& state, const Eigen::MatrixXd& x) {
  return state.net.penultimate(x);
}

std::vector<int> predict(const ClassifierState& state, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd logits = state.net.forward(x);
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index arg = 0;
    logits.col(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

double evaluate(const ClassifierState& state, const LabeledDataset& data) {
  if (data.empty()) throw ValidationError("evaluate: empty dataset");
  const auto pred = predict(state, data.feature_matrix());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_classifier(const std::filesystem::path& path, const ClassifierState& state, const std::string& config_hash) {
  nn::write_checkpoint(path, "classifier", config_hash,
                       {{"architecture", state.architecture}, {"net", nn::to_json(state.net)}});
}

ClassifierState load_classifier(const std::filesystem::path& path) {
  const auto p = nn::read_checkpoint(path, "classifier");
  try {
    return {p.at("architecture").get<std::string>(), nn::mlp_from_json(p.at("net"))};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace utilgen::classifier
