#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/dataset.hpp"
#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/schedule.hpp"
#include "utilgen/nn/mlp.hpp"
#include "utilgen/todv/weight_net.hpp"

namespace utilgen::mlco {

/// Utility of each sample: W(L(f(x; theta), y)).
Eigen::VectorXd score_samples(const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer,
                              const LabeledDataset& batch);

struct PreferencePair {
  int class_id = 0;
  Eigen::VectorXd winner;
  Eigen::VectorXd loser;
  double winner_score = 0.0;
  double loser_score = 0.0;
  // winner_score == loser_score: the pair came from a tied batch.
  bool tied = false;
};

struct PairSet {
  std::vector<PreferencePair> pairs;
  std::vector<int> degenerate_classes;  // classes whose batch scores were all identical
};

/// Per class: rank by score (descending, ties by original index), take the top
/// k and bottom k with k = min(ceil(rho * n), floor(n / 2)), form the k x k
/// cross product, then keep a uniform subsample of at most `cap` pairs
/// (cap <= 0 means no cap). The subsample is drawn from `seed`.
PairSet build_preference_pairs(const LabeledDataset& batch, const Eigen::VectorXd& scores, double rho, int cap,
                               std::uint64_t seed);

// Weighting omega(lambda_t); only the constant weighting is provided.
enum class SnrConvention { kRatio, kLogRatio };
double snr(const diffusion::NoiseSchedule& sched, int t, SnrConvention convention);
double loss_weighting(double lambda);

struct DpoTerms {
  double loss = 0.0;
  double delta_winner = 0.0;  // ||eps_w - eps_psi||^2 - ||eps_w - eps_ref||^2
  double delta_loser = 0.0;
};

/// Diffusion-DPO loss for one pair at timestep t:
///   -log sigmoid(-beta * T * w(lambda_t) * (dL_w - dL_l)).
/// `eps_w` and `eps_l` noise the winner and loser. When `grads` is set the
/// gradient with respect to the trainable network is accumulated into it.
DpoTerms dpo_loss(const PreferencePair& pair, const Eigen::VectorXd& cond, int t, const Eigen::VectorXd& eps_w,
                  const Eigen::VectorXd& eps_l, const diffusion::DenoiserState& state,
                  const diffusion::NoiseSchedule& sched, double beta, nn::MlpGradients* grads = nullptr,
                  SnrConvention convention = SnrConvention::kRatio);

/// Average implicit-reward margin dL_l - dL_w over `draws` shared
/// (t, eps_w, eps_l) draws; positive means the trainable model prefers the winner.
double implicit_reward_margin(const PreferencePair& pair, const Eigen::VectorXd& cond,
                              const diffusion::DenoiserState& state, const diffusion::NoiseSchedule& sched,
                              int draws, std::uint64_t seed);

struct DpoConfig {
  double beta = 500.0;
  double learning_rate = 1e-4;
  int batch_size = 8;              // pairs per gradient step
  int iterations = 3;
  double rho = 0.25;
  int pair_cap = 64;               // per class per iteration
  int samples_per_class = 64;      // generated batch B per class
  int max_steps_per_class = 400;   // across all iterations
  double guidance = 2.0;
  int sampling_steps = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MlcoIteration {
  int iteration = 0;
  double mean_score = 0.0;  // utility of the batch generated at the start of the iteration
  std::size_t pairs = 0;
  double mean_loss = 0.0;
};

struct MlcoResult {
  diffusion::DenoiserState state;
  std::vector<MlcoIteration> log;
  std::vector<PreferencePair> last_pairs;
};

/// Iterated preference tuning: each iteration snapshots the reference,
/// generates `samples_per_class` samples per class, scores them, builds pairs
/// and takes Adam steps on the DPO loss. Throws ConfigError when every class
/// scores its whole batch identically.
MlcoResult run_mlco(diffusion::DenoiserState state, const std::vector<diffusion::ClassToken>& tokens,
                    const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer,
                    const DpoConfig& config, const diffusion::NoiseSchedule& sched);

/// Generates `count` samples of every class with plain noise:
/// ddim_sample at the given guidance from the stream "<stream>/<class>".
LabeledDataset generate_per_class(const diffusion::Denoiser& model, const diffusion::NoiseSchedule& sched,
                                  const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                  double guidance, int sampling_steps, std::uint64_t seed, const std::string& stream);

// Audit file: one record per pair: class, winner score, loser score, winner features, loser features.
void save_preference_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);

}  // namespace utilgen::mlco
