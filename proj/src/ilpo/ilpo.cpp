#include "utilgen/ilpo/ilpo.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"
#include "utilgen/diffusion/ddim.hpp"
#include "utilgen/mlco/mlco.hpp"
#include "utilgen/nn/mlp.hpp"

namespace utilgen::ilpo {

using classifier::ClassifierState;
using diffusion::Denoiser;
using diffusion::NoiseSchedule;

void IlpoConfig::validate() const {
  if (!(prompt_lr > 0)) throw ConfigError("ilpo.prompt_lr must be positive");
  if (prompt_epochs < 0) throw ConfigError("ilpo.prompt_epochs must be non-negative");
  if (draws <= 0 || chain_length <= 0 || synthesis_steps <= 0) throw ConfigError("ilpo: sizes must be positive");
  if (round_trips < 1) throw ConfigError("ilpo.round_trips must be at least 1");
  if (inversion_refinements < 0) throw ConfigError("ilpo.inversion_refinements must be non-negative");
  if (!(lambda >= 0)) throw ConfigError("ilpo.lambda must be non-negative");
  if (optimize_noise && !(omega_denoise > omega_invert))
    throw ConfigError("ilpo: omega_denoise must exceed omega_invert");
}

namespace {

// dW/dl for every loss.
Eigen::VectorXd weight_slope(const todv::WeightNetParams& phi, const Eigen::VectorXd& losses,
                             const Eigen::VectorXd& weights) {
  Eigen::VectorXd out(losses.size());
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    double s = 0.0;
    for (int h = 0; h < phi.hidden(); ++h)
      if (phi.w1[h] * losses[i] + phi.b1[h] > 0) s += phi.w2[h] * phi.w1[h];
    out[i] = weights[i] * (1.0 - weights[i]) * s;
  }
  return out;
}

// Cosine of every column of h against e, and d cos / d h.
Eigen::VectorXd cosine(const Eigen::MatrixXd& h, const Eigen::VectorXd& e, Eigen::MatrixXd* grad) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(h.cols());
  if (grad) *grad = Eigen::MatrixXd::Zero(h.rows(), h.cols());
  const double en = e.norm();
  if (en == 0.0) return out;
  for (Eigen::Index i = 0; i < h.cols(); ++i) {
    const double hn = h.col(i).norm();
    if (hn == 0.0) continue;
    const double c = h.col(i).dot(e) / (hn * en);
    out[i] = c;
    if (grad) grad->col(i) = e / (hn * en) - c * h.col(i) / (hn * hn);
  }
  return out;
}

}  // namespace

double semantic_regularizer(const Eigen::VectorXd& x, const Eigen::VectorXd& prototype, const ClassifierState& scorer) {
  const Eigen::MatrixXd h = scorer.net.penultimate(x);
  if (h.norm() == 0.0 || prototype.norm() == 0.0) {
    warn("semantic_regularizer: zero feature vector, cosine taken as 0");
    return 0.0;
  }
  return -cosine(h, prototype, nullptr)[0];
}

UtilityObjective::UtilityObjective(const todv::WeightNetParams& phi, const ClassifierState& scorer, int label,
                                   Eigen::VectorXd prototype, double lambda)
    : phi_(phi), scorer_(scorer), label_(label), prototype_(std::move(prototype)), lambda_(lambda) {
  if (label < 0 || label >= scorer.num_classes()) throw RangeError("UtilityObjective: label out of range");
  if (prototype_.size() != scorer.hidden_width())
    throw ValidationError("UtilityObjective: prototype width does not match classifier features");
}

Eigen::VectorXd UtilityObjective::evaluate(const Eigen::MatrixXd& x, Eigen::MatrixXd* grad) const {
  const std::vector<int> labels(static_cast<std::size_t>(x.cols()), label_);
  const auto pass = classifier::loss_pass(scorer_, x, labels);
  const Eigen::VectorXd w = todv::predict_weights(phi_, pass.losses);

  // Single hidden layer: h = act(W1 x + b1).
  const auto& first = scorer_.net.layers().front();
  const Eigen::MatrixXd& pre = pass.cache.pre.front();
  const Eigen::MatrixXd h = nn::activate(scorer_.net.hidden_activation(), pre);
  Eigen::MatrixXd dcos;
  const Eigen::VectorXd cos = cosine(h, prototype_, grad ? &dcos : nullptr);

  if (grad) {
    const Eigen::VectorXd slope = weight_slope(phi_, pass.losses, w);
    *grad = scorer_.net.backward(pass.cache, pass.logit_grads * slope.asDiagonal(), nullptr);
    const Eigen::MatrixXd dpre =
        (lambda_ * dcos).cwiseProduct(nn::activate_derivative(scorer_.net.hidden_activation(), pre));
    *grad += first.weight.transpose() * dpre;
  }
  return w + lambda_ * cos;
}

double prompt_objective(const Eigen::VectorXd& cond, const Eigen::MatrixXd& noise, const Denoiser& model,
                        const NoiseSchedule& sched, const SampleObjective& objective, double guidance,
                        int chain_length, Eigen::VectorXd* grad) {
  if (noise.cols() == 0) throw ValidationError("prompt_objective: no noise draws");
  diffusion::DdimChain chain(model, sched, guidance, chain_length);
  const Eigen::MatrixXd x0 = chain.forward(noise, cond);
  if (!x0.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd g;
  const Eigen::VectorXd j = objective.evaluate(x0, grad ? &g : nullptr);
  const auto b = static_cast<double>(noise.cols());
  if (grad) *grad = chain.backward(g / b).cond;
  return j.mean();
}

PromptState optimize_prompt(PromptState prompt, const Denoiser& model, const NoiseSchedule& sched,
                            const SampleObjective& objective, const IlpoConfig& config, PromptTrace* trace) {
  if (prompt.embedding.size() != model.cond_dim())
    throw ValidationError("optimize_prompt: embedding width does not match the denoiser");
  Rng rng(config.seed, "ilpo/prompt_noise/" + std::to_string(prompt.class_id));
  nn::Adam adam(prompt.embedding.size(), config.prompt_lr);
  Eigen::VectorXd previous = prompt.embedding;
  int consecutive = 0;
  PromptTrace local;

  for (int epoch = 0; epoch < config.prompt_epochs; ++epoch) {
    const Eigen::MatrixXd noise = rng.normal_matrix(model.feature_dim(), config.draws);
    Eigen::VectorXd grad;
    const double j = prompt_objective(prompt.embedding, noise, model, sched, objective, config.synthesis_guidance,
                                      config.chain_length, &grad);
    if (!std::isfinite(j) || !grad.allFinite()) {
      if (++consecutive > 5) throw NumericalError("optimize_prompt: objective stayed non-finite after 5 halvings");
      prompt.embedding = previous;
      adam.set_learning_rate(adam.learning_rate() / 2.0);
      ++local.halvings;
      warn("optimize_prompt: non-finite objective, rolled back and halved the learning rate");
      continue;
    }
    consecutive = 0;
    local.objective.push_back(j);
    previous = prompt.embedding;
    adam.step(prompt.embedding, -grad);  // ascent
  }
  if (trace) *trace = std::move(local);
  return prompt;
}

Eigen::MatrixXd cfg_round_trip(const Eigen::MatrixXd& noise, const Eigen::VectorXd& cond, const Denoiser& model,
                               const NoiseSchedule& sched, double omega_denoise, double omega_invert, int steps,
                               int repeats, int refinements) {
  Eigen::MatrixXd x = noise;
  for (int r = 0; r < repeats; ++r) {
    const Eigen::MatrixXd x0 = diffusion::ddim_sample(model, sched, x, cond, omega_denoise, steps);
    x = diffusion::ddim_invert(model, sched, x0, cond, omega_invert, steps, refinements);
  }
  return x;
}

Eigen::MatrixXd optimize_noise(const Eigen::MatrixXd& noise, const Eigen::VectorXd& prompt, const Denoiser& model,
                               const NoiseSchedule& sched, const IlpoConfig& config) {
  if (!(config.omega_denoise > config.omega_invert))
    throw ConfigError("optimize_noise: omega_denoise must exceed omega_invert");
  return cfg_round_trip(noise, prompt, model, sched, config.omega_denoise, config.omega_invert,
                        config.synthesis_steps, config.round_trips, config.inversion_refinements);
}

std::vector<Eigen::VectorXd> class_prototypes(const ClassifierState& scorer, const LabeledDataset& few_shot) {
  const int k = scorer.num_classes();
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(scorer.hidden_width()));
  for (int c = 0; c < k; ++c) {
    const LabeledDataset members = few_shot.of_class(c);
    if (members.empty()) {
      warn("class_prototypes: class " + std::to_string(c) + " has no samples; its semantic term is disabled");
      continue;
    }
    out[static_cast<std::size_t>(c)] = classifier::features(scorer, members.feature_matrix()).rowwise().mean();
  }
  return out;
}

IlpoResult generate_high_utility(const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                 const Denoiser& model, const todv::WeightNetParams& phi,
                                 const ClassifierState& scorer, const LabeledDataset& few_shot,
                                 const NoiseSchedule& sched, const IlpoConfig& config) {
  config.validate();
  const int k = static_cast<int>(counts.size());
  if (k != scorer.num_classes()) throw ValidationError("generate_high_utility: counts do not cover every class");
  const auto prototypes = class_prototypes(scorer, few_shot);

  IlpoResult result{LabeledDataset(k, model.feature_dim(), Provenance::kSynthetic), {}, {}};
  for (int c = 0; c < k; ++c) {
    PromptState prompt{c, diffusion::token_for(tokens, c).embedding, prototypes[static_cast<std::size_t>(c)],
                       config.lambda};
    PromptTrace trace;
    if (config.optimize_prompts) {
      const UtilityObjective objective(phi, scorer, c, prompt.prototype, config.lambda);
      prompt = optimize_prompt(prompt, model, sched, objective, config, &trace);
    }
    result.prompts.push_back({c, prompt.embedding});
    result.traces.push_back(std::move(trace));
    if (counts[static_cast<std::size_t>(c)] <= 0) continue;

    Rng rng(config.seed, "synthesis/noise/" + std::to_string(c));
    Eigen::MatrixXd noise = rng.normal_matrix(model.feature_dim(), counts[static_cast<std::size_t>(c)]);
    if (config.optimize_noise) noise = optimize_noise(noise, prompt.embedding, model, sched, config);
    const Eigen::MatrixXd x =
        diffusion::ddim_sample(model, sched, noise, prompt.embedding, config.synthesis_guidance, config.synthesis_steps);
    for (Eigen::Index i = 0; i < x.cols(); ++i) result.data.add(x.col(i), c);
  }
  return result;
}

LabeledDataset generate_baseline(const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                 const Denoiser& model, const NoiseSchedule& sched, double guidance, int steps,
                                 std::uint64_t seed) {
  return mlco::generate_per_class(model, sched, tokens, counts, guidance, steps, seed, "synthesis/noise");
}

}  // namespace utilgen::ilpo
