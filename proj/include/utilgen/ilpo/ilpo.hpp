#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/dataset.hpp"
#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/schedule.hpp"
#include "utilgen/todv/weight_net.hpp"

namespace utilgen::ilpo {

struct PromptState {
  int class_id = 0;
  Eigen::VectorXd embedding;  // starts from the class token
  Eigen::VectorXd prototype;  // mean classifier features of the class's few-shot real samples
  double lambda = 0.1;
};

struct IlpoConfig {
  double prompt_lr = 1e-3;
  int prompt_epochs = 400;
  int draws = 8;            // noise samples per objective estimate
  int chain_length = 10;    // DDIM steps differentiated through
  double omega_denoise = 5.5;
  double omega_invert = 0.0;
  double lambda = 0.1;
  double synthesis_guidance = 2.0;
  int synthesis_steps = 50;
  int round_trips = 1;
  int inversion_refinements = 3;  // fixed-point passes per inversion step
  bool optimize_prompts = true;
  bool optimize_noise = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// -cos(features(x), prototype). A zero feature vector gives 0 (with a warning).
double semantic_regularizer(const Eigen::VectorXd& x, const Eigen::VectorXd& prototype,
                            const classifier::ClassifierState& scorer);

/// Per-sample objective J(x) and dJ/dx for a batch of generated samples.
class SampleObjective {
 public:
  virtual ~SampleObjective() = default;
  // Returns J for every column of x; fills `grad` (same shape as x) when set.
  virtual Eigen::VectorXd evaluate(const Eigen::MatrixXd& x, Eigen::MatrixXd* grad) const = 0;
};

/// J(x) = W(L(f(x), y)) - lambda * L_sem(x), with L_sem = -cos(features(x), e_y).
class UtilityObjective final : public SampleObjective {
 public:
  UtilityObjective(const todv::WeightNetParams& phi, const classifier::ClassifierState& scorer, int label,
                   Eigen::VectorXd prototype, double lambda);
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& x, Eigen::MatrixXd* grad) const override;

 private:
  const todv::WeightNetParams& phi_;
  const classifier::ClassifierState& scorer_;
  int label_;
  Eigen::VectorXd prototype_;
  double lambda_;
};

struct PromptTrace {
  std::vector<double> objective;  // estimate at each epoch, before the step
  int halvings = 0;
};

/// Mean objective over `noise` columns for a condition, with its gradient
/// with respect to the condition (through a `chain_length`-step DDIM chain).
double prompt_objective(const Eigen::VectorXd& cond, const Eigen::MatrixXd& noise, const diffusion::Denoiser& model,
                        const diffusion::NoiseSchedule& sched, const SampleObjective& objective, double guidance,
                        int chain_length, Eigen::VectorXd* grad);

/// Gradient ascent (Adam) on the condition embedding. Each epoch draws fresh
/// noise. A non-finite objective or gradient rolls back the last step and
/// halves the learning rate; five consecutive halvings abort with NumericalError.
PromptState optimize_prompt(PromptState prompt, const diffusion::Denoiser& model, const diffusion::NoiseSchedule& sched,
                            const SampleObjective& objective, const IlpoConfig& config, PromptTrace* trace = nullptr);

/// DDIM at omega_denoise followed by inversion at omega_invert, `repeats` times.
/// No ordering is imposed on the guidance scales here.
Eigen::MatrixXd cfg_round_trip(const Eigen::MatrixXd& noise, const Eigen::VectorXd& cond,
                               const diffusion::Denoiser& model, const diffusion::NoiseSchedule& sched,
                               double omega_denoise, double omega_invert, int steps, int repeats = 1,
                               int refinements = 0);

/// Semantic injection into the initial noise. Requires omega_denoise > omega_invert.
Eigen::MatrixXd optimize_noise(const Eigen::MatrixXd& noise, const Eigen::VectorXd& prompt,
                               const diffusion::Denoiser& model, const diffusion::NoiseSchedule& sched,
                               const IlpoConfig& config);

struct IlpoResult {
  LabeledDataset data;
  std::vector<diffusion::ClassToken> prompts;  // optimized embeddings per class
  std::vector<PromptTrace> traces;
};

// Mean classifier features per class of a few-shot set.
std::vector<Eigen::VectorXd> class_prototypes(const classifier::ClassifierState& scorer, const LabeledDataset& few_shot);

/// Per class: optimize the prompt once, then for each requested sample draw
/// noise, refine it, and sample at the synthesis guidance. Noise for class k
/// comes from the stream "synthesis/noise/<k>", the same stream the plain
/// baseline uses, so disabling both optimizations reproduces it exactly.
IlpoResult generate_high_utility(const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                 const diffusion::Denoiser& model, const todv::WeightNetParams& phi,
                                 const classifier::ClassifierState& scorer, const LabeledDataset& few_shot,
                                 const diffusion::NoiseSchedule& sched, const IlpoConfig& config);

/// The unoptimized baseline: class tokens and raw noise from "synthesis/noise/<k>".
LabeledDataset generate_baseline(const std::vector<diffusion::ClassToken>& tokens, const std::vector<int>& counts,
                                 const diffusion::Denoiser& model, const diffusion::NoiseSchedule& sched,
                                 double guidance, int steps, std::uint64_t seed);

}  // namespace utilgen::ilpo
