#pragma once

#include <cstdint>
#include <vector>

#include "utilgen/core/dataset.hpp"
#include "utilgen/diffusion/denoiser.hpp"

namespace utilgen::diffusion {

struct TextualInversionConfig {
  double learning_rate = 1e-4;
  int steps = 400;
  int batch_size = 1;
  int instances_per_class = 16;
  std::uint64_t seed = 0;
};

/// Fits a class token on a few-shot set with the denoiser frozen: Adam on the
/// embedding alone, minimizing the epsilon-prediction loss.
ClassToken learn_class_token(int class_id, const LabeledDataset& few_shot, const Denoiser& frozen,
                             const NoiseSchedule& sched, const Eigen::VectorXd& initial,
                             const TextualInversionConfig& config, std::vector<double>* losses = nullptr);

// learn_class_token for every class, each from the first
// `instances_per_class` samples of that class in `real`.
std::vector<ClassToken> learn_all_tokens(const LabeledDataset& real, const Denoiser& frozen,
                                         const NoiseSchedule& sched, const std::vector<ClassToken>& initial,
                                         const TextualInversionConfig& config);

}  // namespace utilgen::diffusion
