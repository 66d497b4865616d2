#include "utilgen/mlco/mlco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "utilgen/core/error.hpp"
#include "utilgen/core/random.hpp"
#include "utilgen/diffusion/ddim.hpp"

namespace utilgen::mlco {

using diffusion::DenoiserState;
using diffusion::NoiseSchedule;

Eigen::VectorXd score_samples(const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer,
                              const LabeledDataset& batch) {
  if (batch.empty()) return {};
  if (batch.num_classes() != scorer.num_classes() || batch.feature_dim() != scorer.feature_dim())
    throw ValidationError("score_samples: batch classes/dimension do not match the scorer");
  return todv::predict_weights(phi, classifier::per_sample_loss(scorer, batch));
}

PairSet build_preference_pairs(const LabeledDataset& batch, const Eigen::VectorXd& scores, double rho, int cap,
                               std::uint64_t seed) {
  if (static_cast<std::size_t>(scores.size()) != batch.size())
    throw ValidationError("build_preference_pairs: one score per sample expected");
  if (!(rho > 0.0 && rho <= 0.5)) throw ConfigError("build_preference_pairs: rho must lie in (0, 0.5]");
  PairSet out;
  Rng rng(seed, "preference_pairs");
  for (int c = 0; c < batch.num_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (batch[i].label == c) members.push_back(i);
    const std::size_t n = members.size();
    if (n < 2) continue;
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)]; });
    const auto k = std::min(static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-12)), n / 2);
    if (k == 0) continue;
    const double top = scores[static_cast<Eigen::Index>(members.front())];
    const double bottom = scores[static_cast<Eigen::Index>(members.back())];
    if (top == bottom) {
      out.degenerate_classes.push_back(c);
      warn("preference pairs: all scores tied for class " + std::to_string(c) + "; pairs follow index order");
    }

    std::vector<std::pair<std::size_t, std::size_t>> combos;
    for (std::size_t w = 0; w < k; ++w)
      for (std::size_t l = n - k; l < n; ++l) combos.emplace_back(members[w], members[l]);
    if (cap > 0 && combos.size() > static_cast<std::size_t>(cap)) {
      auto order = rng.permutation(combos.size());
      order.resize(static_cast<std::size_t>(cap));
      std::sort(order.begin(), order.end());
      std::vector<std::pair<std::size_t, std::size_t>> kept;
      for (auto i : order) kept.push_back(combos[i]);
      combos = std::move(kept);
    }
    for (const auto& [w, l] : combos) {
      PreferencePair p;
      p.class_id = c;
      p.winner = batch[w].features;
      p.loser = batch[l].features;
      p.winner_score = scores[static_cast<Eigen::Index>(w)];
      p.loser_score = scores[static_cast<Eigen::Index>(l)];
      p.tied = p.winner_score == p.loser_score;
      out.pairs.push_back(std::move(p));
    }
  }
  return out;
}

double snr(const NoiseSchedule& sched, int t, SnrConvention convention) {
  const double ratio = sched.snr(t);
  return convention == SnrConvention::kRatio ? ratio : std::log(ratio);
}

double loss_weighting(double /*lambda*/) { return 1.0; }

DpoTerms dpo_loss(const PreferencePair& pair, const Eigen::VectorXd& cond, int t, const Eigen::VectorXd& eps_w,
                  const Eigen::VectorXd& eps_l, const DenoiserState& state, const NoiseSchedule& sched, double beta,
                  nn::MlpGradients* grads, SnrConvention convention) {
  const auto d = pair.winner.size();
  Eigen::MatrixXd x0(d, 2), eps(d, 2);
  x0 << pair.winner, pair.loser;
  eps << eps_w, eps_l;
  const std::vector<int> ts{t, t};
  const Eigen::MatrixXd xt = diffusion::forward_noising(x0, ts, eps, sched);
  const Eigen::MatrixXd c = cond.replicate(1, 2);

  nn::Mlp::Cache cache;
  const Eigen::MatrixXd pred = state.trainable.predict(xt, ts, c, grads ? &cache : nullptr);
  const Eigen::MatrixXd ref = state.reference.predict(xt, ts, c);
  const Eigen::VectorXd err = (eps - pred).colwise().squaredNorm().transpose();
  const Eigen::VectorXd err_ref = (eps - ref).colwise().squaredNorm().transpose();

  DpoTerms out;
  out.delta_winner = err[0] - err_ref[0];
  out.delta_loser = err[1] - err_ref[1];
  const double scale = beta * sched.steps() * loss_weighting(snr(sched, t, convention));
  const double z = -scale * (out.delta_winner - out.delta_loser);
  out.loss = nn::softplus(-z);

  if (grads) {
    // d loss / d dL_w = scale * sigmoid(-z); d loss / d dL_l is its negative.
    const double k = scale * nn::sigmoid(-z);
    Eigen::MatrixXd upstream(d, 2);
    upstream.col(0) = k * 2.0 * (pred.col(0) - eps.col(0));
    upstream.col(1) = -k * 2.0 * (pred.col(1) - eps.col(1));
    nn::MlpGradients g;
    state.trainable.backward(cache, upstream, &g);
    if (grads->weight.empty()) {
      *grads = std::move(g);
    } else {
      *grads += g;
    }
  }
  return out;
}

double implicit_reward_margin(const PreferencePair& pair, const Eigen::VectorXd& cond, const DenoiserState& state,
                              const NoiseSchedule& sched, int draws, std::uint64_t seed) {
  Rng rng(seed, "implicit_reward");
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    const int t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.steps())));
    const Eigen::VectorXd ew = rng.normal_vector(pair.winner.size());
    const Eigen::VectorXd el = rng.normal_vector(pair.loser.size());
    const auto terms = dpo_loss(pair, cond, t, ew, el, state, sched, 1.0);
    acc += terms.delta_loser - terms.delta_winner;
  }
  return acc / draws;
}

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("mlco.beta must be positive");
  if (!(rho > 0.0 && rho <= 0.5)) throw ConfigError("mlco.rho must lie in (0, 0.5]");
  if (iterations < 0 || batch_size <= 0 || samples_per_class < 2 || max_steps_per_class < 0)
    throw ConfigError("mlco: invalid sizes");
  if (!(learning_rate > 0.0)) throw ConfigError("mlco.learning_rate must be positive");
}

LabeledDataset generate_per_class(const diffusion::Denoiser& model, const NoiseSchedule& sched,
                                  const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                  double guidance, int sampling_steps, std::uint64_t seed, const std::string& stream) {
  LabeledDataset out(static_cast<int>(counts.size()), model.feature_dim(), Provenance::kSynthetic);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] <= 0) continue;
    Rng rng(seed, stream + "/" + std::to_string(c));
    const Eigen::MatrixXd noise = rng.normal_matrix(model.feature_dim(), counts[c]);
    const Eigen::MatrixXd x = diffusion::ddim_sample(model, sched, noise, diffusion::token_for(tokens, static_cast<int>(c)).embedding,
                                                     guidance, sampling_steps);
    for (Eigen::Index i = 0; i < x.cols(); ++i) out.add(x.col(i), static_cast<int>(c));
  }
  return out;
}

MlcoResult run_mlco(DenoiserState state, const std::vector<diffusion::ClassToken>& tokens,
                    const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer, const DpoConfig& config,
                    const NoiseSchedule& sched) {
  config.validate();
  MlcoResult result;
  const int k = scorer.num_classes();
  const Eigen::Index net_size = state.trainable.net().num_params();
  nn::Adam adam(net_size, config.learning_rate);
  Rng rng(config.seed, "mlco/dpo");
  const int steps_per_class = config.iterations > 0 ? config.max_steps_per_class / config.iterations : 0;

  for (int iter = 0; iter < config.iterations; ++iter) {
    state.snapshot_reference();
    const std::vector<int> counts(static_cast<std::size_t>(k), config.samples_per_class);
    const LabeledDataset batch = generate_per_class(state.trainable, sched, tokens, counts, config.guidance,
                                                    config.sampling_steps, config.seed,
                                                    "mlco/generate/" + std::to_string(iter));
    const Eigen::VectorXd scores = score_samples(phi, scorer, batch);
    PairSet set = build_preference_pairs(batch, scores, config.rho, config.pair_cap,
                                         derive_seed(config.seed, "mlco/pairs/" + std::to_string(iter)));
    if (static_cast<int>(set.degenerate_classes.size()) == k)
      throw ConfigError("run_mlco: every class scored its batch identically; refusing to train on ties");

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < set.pairs.size(); ++i) {
      const bool degenerate = std::find(set.degenerate_classes.begin(), set.degenerate_classes.end(),
                                        set.pairs[i].class_id) != set.degenerate_classes.end();
      if (!degenerate) by_class[static_cast<std::size_t>(set.pairs[i].class_id)].push_back(i);
    }
    std::vector<std::size_t> cursor(static_cast<std::size_t>(k), 0);
    for (auto& members : by_class) rng.shuffle(members);

    double loss_sum = 0.0;
    long loss_count = 0;
    for (int step = 0; step < steps_per_class; ++step) {
      for (int c = 0; c < k; ++c) {
        auto& members = by_class[static_cast<std::size_t>(c)];
        if (members.empty()) continue;
        const Eigen::VectorXd& cond = diffusion::token_for(tokens, c).embedding;
        nn::MlpGradients grads;
        for (int b = 0; b < config.batch_size; ++b) {
          auto& cur = cursor[static_cast<std::size_t>(c)];
          if (cur == members.size()) {
            rng.shuffle(members);
            cur = 0;
          }
          const PreferencePair& pair = set.pairs[members[cur++]];
          const int t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.steps())));
          const Eigen::VectorXd ew = rng.normal_vector(pair.winner.size());
          const Eigen::VectorXd el = rng.normal_vector(pair.loser.size());
          loss_sum += dpo_loss(pair, cond, t, ew, el, state, sched, config.beta, &grads).loss;
          ++loss_count;
        }
        grads *= 1.0 / config.batch_size;
        Eigen::VectorXd params = state.trainable.net().flat();
        adam.step(params, state.trainable.net().flatten(grads));
        state.trainable.net().set_flat(params);
      }
    }

    MlcoIteration log;
    log.iteration = iter + 1;
    log.mean_score = scores.size() > 0 ? scores.mean() : 0.0;
    log.pairs = set.pairs.size();
    log.mean_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    result.log.push_back(log);
    result.last_pairs = std::move(set.pairs);
  }
  result.state = std::move(state);
  return result;
}

void save_preference_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "class,winner_score,loser_score,winner,loser\n";
  auto join = [](const Eigen::VectorXd& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v[i]);
    return s;
  };
  for (const auto& p : pairs)
    out << p.class_id << ',' << format_double(p.winner_score) << ',' << format_double(p.loser_score) << ','
        << join(p.winner) << ',' << join(p.loser) << '\n';
}

}  // namespace utilgen::mlco
