#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <Eigen/Core>

#include "utilgen/core/random.hpp"
#include "utilgen/core/task.hpp"
#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/schedule.hpp"
#include "utilgen/harness/config.hpp"

namespace testing {

// Central differences of a scalar function, one coordinate at a time.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("utilgen_" + tag + "_" + std::to_string(utilgen::fnv1a64(tag) ^ stamp()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  static std::uint64_t stamp() {
    return static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
  }
  std::filesystem::path path_;
};

// Denoiser whose output is identically zero: eps_hat = 0 for every input.
inline utilgen::diffusion::Denoiser zero_denoiser(int dim, int steps, int cond_dim = 4, int time_dim = 4) {
  utilgen::Rng rng(1);
  utilgen::nn::Mlp net({dim + time_dim + cond_dim, 8, dim}, utilgen::nn::Activation::kSilu, rng);
  for (auto& layer : net.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return utilgen::diffusion::Denoiser(std::move(net), Eigen::VectorXd::Zero(cond_dim), dim, time_dim, steps);
}

// Small random SiLU denoiser for gradient checks.
inline utilgen::diffusion::Denoiser random_denoiser(int dim, int steps, std::uint64_t seed, int hidden = 8) {
  utilgen::Rng rng(seed);
  utilgen::diffusion::DenoiserConfig cfg{hidden, 4, 3};
  utilgen::diffusion::Denoiser d(dim, steps, cfg, rng);
  d.set_null_token(rng.normal_vector(cfg.cond_dim) * 0.5);
  return d;
}

/// Harness config small enough for a full pipeline in a few seconds.
inline utilgen::harness::Config tiny_config() {
  utilgen::harness::Config c;
  const std::pair<const char*, const char*> overrides[] = {
      {"task.train_size", "120"},       {"task.validation_size", "40"}, {"task.test_size", "80"},
      {"generator.train_steps", "150"}, {"generator.hidden", "32"},     {"generator.batch", "32"},
      {"ti.steps", "5"},                {"ti.instances", "4"},          {"todv.max_iters", "30"},
      {"todv.hidden", "8"},             {"todv.train_batch", "32"},     {"todv.val_batch", "20"},
      {"mlco.iterations", "1"},         {"mlco.samples_per_class", "8"}, {"mlco.max_steps_per_class", "4"},
      {"ilpo.prompt_epochs", "3"},      {"ilpo.draws", "2"},            {"ilpo.chain_length", "3"},
      {"synthesis.steps", "10"},        {"synthesis.budget", "0.25"},   {"train.epochs", "2"},
      {"analysis.influence_samples", "30"}, {"experiments.budgets", "0.25,0.5"}};
  for (const auto& [k, v] : overrides) c.set(k, v);
  return c;
}

}  // namespace testing
