#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "utilgen/core/dataset.hpp"

namespace utilgen {

// One Gaussian subpopulation of a class: N(mean, scale^2 I) picked with `weight`.
struct Mode {
  Eigen::VectorXd mean;
  double scale = 1.0;
  double weight = 1.0;
};

/// Class-conditional Gaussian mixtures plus the composition a downstream task
/// validates (and is tested) on. Training draws use each mode's `weight`;
/// validation and test draws use `validation_weights[class][mode]`.
struct TaskSpec {
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<std::vector<Mode>> modes;                // [class][mode]
  std::vector<std::vector<double>> validation_weights;  // [class][mode]
  double label_noise = 0.0;                            // training split only

  // Throws ValidationError on any broken invariant.
  void validate() const;
};

struct SplitSizes {
  std::size_t train = 1000;
  std::size_t validation = 200;
  std::size_t test = 1000;
};

struct SplitBundle {
  LabeledDataset real_train;
  LabeledDataset validation;
  LabeledDataset test;
  std::optional<LabeledDataset> synthetic;

  // Ground truth kept for analysis: the mode each sample was drawn from, the
  // pre-corruption training labels, and which training indices were flipped.
  std::vector<int> train_modes;
  std::vector<int> validation_modes;
  std::vector<int> test_modes;
  std::vector<int> clean_train_labels;
  std::vector<std::size_t> flipped;
};

/// Draws train/validation/test splits. Each split uses the stream
/// `derive_seed(seed, "<split>")`; label flips use the separate stream
/// "train_noise", so the features of a noisy bundle equal those of the
/// noiseless bundle with the same seed. Flipped labels move to a uniformly
/// chosen different class.
SplitBundle make_synthetic_task(const TaskSpec& spec, const SplitSizes& sizes, std::uint64_t seed);

// Index of the class mode whose mean is nearest to x.
int nearest_mode(const TaskSpec& spec, int label, const Eigen::VectorXd& x);

// Per class, the fraction of samples nearest to each of that class's modes.
std::vector<std::vector<double>> mode_fractions(const TaskSpec& spec, const LabeledDataset& data);

/// Preset with two subpopulations per class on a circle. Class k's "A" mode
/// and class k+1's "B" mode share a site and are split tangentially by
/// `offset`, so the pair contests the same region. Tasks built
/// from it share training marginals (`train_a_weight` for mode A) and differ
/// only in how much of each class's validation/test mass sits in mode A.
TaskSpec conflict_task(int num_classes, int feature_dim, double train_a_weight,
                       double validation_a_weight, double radius = 3.0, double scale = 0.5,
                       double offset = 0.6);

/// One Gaussian per class with random means, for label-noise experiments.
TaskSpec gaussian_classes_task(int num_classes, int feature_dim, double separation, double scale,
                               double label_noise, std::uint64_t layout_seed);

}  // namespace utilgen
