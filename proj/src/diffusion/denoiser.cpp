#include "utilgen/diffusion/denoiser.hpp"

#include <cmath>
#include <string>

#include "utilgen/core/error.hpp"

namespace utilgen::diffusion {

Denoiser::Denoiser(int feature_dim, int total_steps, const DenoiserConfig& config, Rng& rng)
    : null_token_(Eigen::VectorXd::Zero(config.cond_dim)),
      feature_dim_(feature_dim),
      time_dim_(config.time_dim),
      total_steps_(total_steps) {
  if (config.time_dim % 2 != 0) throw ValidationError("time embedding width must be even");
  const int in = feature_dim + config.time_dim + config.cond_dim;
  net_ = nn::Mlp({in, config.hidden_width, config.hidden_width, feature_dim}, nn::Activation::kSilu, rng);
}

Denoiser::Denoiser(nn::Mlp net, Eigen::VectorXd null_token, int feature_dim, int time_dim, int total_steps)
    : net_(std::move(net)),
      null_token_(std::move(null_token)),
      feature_dim_(feature_dim),
      time_dim_(time_dim),
      total_steps_(total_steps) {
  if (net_.input_dim() != feature_dim_ + time_dim_ + cond_dim() || net_.output_dim() != feature_dim_)
    throw ValidationError("denoiser network shape does not match its declared widths");
}

Eigen::VectorXd Denoiser::time_embedding(int t) const {
  // Timesteps are rescaled to a 1000-step clock before the usual sinusoid bank.
  const int half = time_dim_ / 2;
  const double clock = 1000.0 * static_cast<double>(t) / static_cast<double>(total_steps_);
  Eigen::VectorXd e(time_dim_);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    e[i] = std::sin(clock * freq);
    e[i + half] = std::cos(clock * freq);
  }
  return e;
}

Eigen::MatrixXd Denoiser::assemble(const Eigen::MatrixXd& x, const std::vector<int>& t,
                                   const Eigen::MatrixXd& cond) const {
  const Eigen::Index b = x.cols();
  if (x.rows() != feature_dim_ || cond.rows() != cond_dim() || cond.cols() != b ||
      t.size() != static_cast<std::size_t>(b))
    throw ValidationError("denoiser: input shape mismatch");
  Eigen::MatrixXd in(feature_dim_ + time_dim_ + cond_dim(), b);
  in.topRows(feature_dim_) = x;
  in.bottomRows(cond_dim()) = cond;
  int cached_t = -1;
  Eigen::VectorXd emb;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int ti = t[static_cast<std::size_t>(i)];
    if (ti != cached_t) {
      emb = time_embedding(ti);
      cached_t = ti;
    }
    in.block(feature_dim_, i, time_dim_, 1) = emb;
  }
  return in;
}

Eigen::MatrixXd Denoiser::predict(const Eigen::MatrixXd& x, const std::vector<int>& t,
                                  const Eigen::MatrixXd& cond, nn::Mlp::Cache* cache) const {
  return net_.forward(assemble(x, t, cond), cache);
}

Eigen::MatrixXd Denoiser::predict(const Eigen::MatrixXd& x, int t, const Eigen::VectorXd& cond,
                                  nn::Mlp::Cache* cache) const {
  const std::vector<int> ts(static_cast<std::size_t>(x.cols()), t);
  return predict(x, ts, cond.replicate(1, x.cols()), cache);
}

Denoiser::InputGradients Denoiser::backward(const nn::Mlp::Cache& cache, const Eigen::MatrixXd& grad_out,
                                            nn::MlpGradients* grads) const {
  const Eigen::MatrixXd d_in = net_.backward(cache, grad_out, grads);
  return {d_in.topRows(feature_dim_), d_in.bottomRows(cond_dim())};
}

bool operator==(const Denoiser& a, const Denoiser& b) {
  return a.feature_dim_ == b.feature_dim_ && a.time_dim_ == b.time_dim_ && a.total_steps_ == b.total_steps_ &&
         a.null_token_.size() == b.null_token_.size() && a.null_token_ == b.null_token_ && a.net_ == b.net_;
}

const ClassToken& token_for(const std::vector<ClassToken>& tokens, int class_id) {
  for (const auto& tok : tokens)
    if (tok.class_id == class_id) return tok;
  throw ConfigError("no class token for class " + std::to_string(class_id));
}

Eigen::MatrixXd token_matrix(const std::vector<ClassToken>& tokens, const std::vector<int>& labels) {
  if (tokens.empty()) throw ConfigError("no class tokens");
  Eigen::MatrixXd c(tokens.front().embedding.size(), static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    c.col(static_cast<Eigen::Index>(i)) = token_for(tokens, labels[i]).embedding;
  return c;
}

std::vector<ClassToken> initial_tokens(const LabeledDataset& data, int cond_dim, std::uint64_t seed) {
  Rng rng(seed, "token_projection");
  const Eigen::MatrixXd projection =
      rng.normal_matrix(cond_dim, data.feature_dim()) / std::sqrt(static_cast<double>(data.feature_dim()));
  std::vector<ClassToken> tokens;
  for (int c = 0; c < data.num_classes(); ++c) {
    const LabeledDataset members = data.of_class(c);
    if (members.empty()) throw ConfigError("cannot initialize token for empty class " + std::to_string(c));
    const Eigen::VectorXd mean = members.feature_matrix().rowwise().mean();
    tokens.push_back({c, projection * mean});
  }
  return tokens;
}

DenoiserState train_denoiser(const LabeledDataset& data, const std::vector<ClassToken>& tokens,
                             const NoiseSchedule& sched, const DenoiserTrainingConfig& config,
                             DenoiserTrainingReport* report) {
  if (data.empty()) throw ConfigError("train_denoiser: empty dataset");
  for (int c = 0; c < data.num_classes(); ++c) {
    if (data.of_class(c).empty()) continue;
    const auto& tok = token_for(tokens, c);
    if (tok.embedding.size() != config.architecture.cond_dim)
      throw ConfigError("class token " + std::to_string(c) + " has the wrong embedding width");
  }
  if (!(config.cond_dropout >= 0.0 && config.cond_dropout <= 1.0))
    throw ConfigError("condition dropout must lie in [0, 1]");

  Rng init_rng(config.seed, "denoiser_init");
  Denoiser model(data.feature_dim(), sched.steps(), config.architecture, init_rng);
  const Eigen::Index net_size = model.net().num_params();
  const int cdim = config.architecture.cond_dim;
  nn::Adam adam(net_size + cdim, config.learning_rate);

  Rng rng(config.seed, "denoiser_train");
  const Eigen::MatrixXd x_all = data.feature_matrix();
  const std::vector<int> y_all = data.labels();
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const int d = data.feature_dim();

  for (int step = 0; step < config.steps; ++step) {
    Eigen::MatrixXd x0(d, batch), cond(cdim, batch);
    std::vector<int> ts(static_cast<std::size_t>(batch));
    std::vector<bool> is_null(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
      const std::size_t j = rng.index(data.size());
      x0.col(i) = x_all.col(static_cast<Eigen::Index>(j));
      ts[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.steps())));
      const bool drop = rng.uniform() < config.cond_dropout;
      is_null[static_cast<std::size_t>(i)] = drop;
      cond.col(i) = drop ? model.null_token() : token_for(tokens, y_all[j]).embedding;
      if (report) ++(drop ? report->null_condition_uses : report->condition_uses);
    }
    const Eigen::MatrixXd eps = rng.normal_matrix(d, batch);
    const Eigen::MatrixXd xt = forward_noising(x0, ts, eps, sched);

    nn::Mlp::Cache cache;
    const Eigen::MatrixXd pred = model.predict(xt, ts, cond, &cache);
    const Eigen::MatrixXd resid = pred - eps;
    const double scale = 1.0 / static_cast<double>(resid.size());
    if (report) report->losses.push_back(resid.squaredNorm() * scale);

    nn::MlpGradients grads;
    const auto in_grads = model.backward(cache, 2.0 * scale * resid, &grads);
    Eigen::VectorXd null_grad = Eigen::VectorXd::Zero(cdim);
    for (Eigen::Index i = 0; i < batch; ++i)
      if (is_null[static_cast<std::size_t>(i)]) null_grad += in_grads.cond.col(i);

    Eigen::VectorXd params(net_size + cdim), g(net_size + cdim);
    params << model.net().flat(), model.null_token();
    g << model.net().flatten(grads), null_grad;
    adam.step(params, g);
    model.net().set_flat(params.head(net_size));
    model.set_null_token(params.tail(cdim));
  }
  DenoiserState state{model, model};
  return state;
}

double denoising_loss(const Denoiser& model, const NoiseSchedule& sched, const LabeledDataset& data,
                      const Eigen::VectorXd& cond, int draws_per_sample, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("denoising_loss: empty dataset");
  Rng rng(seed, "denoising_loss");
  const Eigen::MatrixXd x = data.feature_matrix();
  const Eigen::Index n = x.cols() * draws_per_sample;
  Eigen::MatrixXd x0(x.rows(), n);
  std::vector<int> ts(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    x0.col(i) = x.col(i % x.cols());
    ts[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.steps())));
  }
  const Eigen::MatrixXd eps = rng.normal_matrix(x.rows(), n);
  const Eigen::MatrixXd pred = model.predict(forward_noising(x0, ts, eps, sched), ts, cond.replicate(1, n));
  return (pred - eps).squaredNorm() / static_cast<double>(pred.size());
}

}  // namespace utilgen::diffusion
