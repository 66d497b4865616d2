#include "utilgen/diffusion/textual_inversion.hpp"

#include <string>

#include "utilgen/core/error.hpp"

namespace utilgen::diffusion {

ClassToken learn_class_token(int class_id, const LabeledDataset& few_shot, const Denoiser& frozen,
                             const NoiseSchedule& sched, const Eigen::VectorXd& initial,
                             const TextualInversionConfig& config, std::vector<double>* losses) {
  if (few_shot.empty())
    throw ConfigError("textual inversion: empty few-shot set for class " + std::to_string(class_id));
  if (initial.size() != frozen.cond_dim()) throw ConfigError("textual inversion: initializer has wrong width");

  Eigen::VectorXd embedding = initial;
  nn::Adam adam(embedding.size(), config.learning_rate);
  Rng rng(config.seed, "textual_inversion/" + std::to_string(class_id));
  const Eigen::MatrixXd x = few_shot.feature_matrix();
  const auto batch = static_cast<Eigen::Index>(config.batch_size);

  for (int step = 0; step < config.steps; ++step) {
    Eigen::MatrixXd x0(x.rows(), batch);
    std::vector<int> ts(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
      x0.col(i) = x.col(static_cast<Eigen::Index>(rng.index(few_shot.size())));
      ts[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.steps())));
    }
    const Eigen::MatrixXd eps = rng.normal_matrix(x.rows(), batch);
    nn::Mlp::Cache cache;
    const Eigen::MatrixXd pred =
        frozen.predict(forward_noising(x0, ts, eps, sched), ts, embedding.replicate(1, batch), &cache);
    const Eigen::MatrixXd resid = pred - eps;
    const double scale = 1.0 / static_cast<double>(resid.size());
    if (losses) losses->push_back(resid.squaredNorm() * scale);
    const auto in = frozen.backward(cache, 2.0 * scale * resid, nullptr);
    adam.step(embedding, in.cond.rowwise().sum());
  }
  return {class_id, embedding};
}

std::vector<ClassToken> learn_all_tokens(const LabeledDataset& real, const Denoiser& frozen,
                                         const NoiseSchedule& sched, const std::vector<ClassToken>& initial,
                                         const TextualInversionConfig& config) {
  const LabeledDataset few_shot = real.take_per_class(config.instances_per_class);
  std::vector<ClassToken> out;
  for (int c = 0; c < real.num_classes(); ++c)
    out.push_back(learn_class_token(c, few_shot.of_class(c), frozen, sched, token_for(initial, c).embedding, config));
  return out;
}

}  // namespace utilgen::diffusion
