#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace utilgen {

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from a root seed and a stream name:
/// `splitmix64(root ^ fnv1a64(name))`. Every split, stage, and noise source
/// draws from its own named stream so that resizing one never perturbs another.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

/// Seeded generator with a portable normal sampler.
///
/// Uniforms take the top 53 bits of mt19937_64; normals use Box-Muller with
/// the second variate cached. Both are fully specified, unlike the
/// std::*_distribution family, so streams agree across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view stream) : engine_(derive_seed(root, stream)) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n);  // uniform in [0, n)

  Eigen::VectorXd normal_vector(Eigen::Index dim);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);
  // k indices sampled with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace utilgen
