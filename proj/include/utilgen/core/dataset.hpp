#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace utilgen {

struct Sample {
  Eigen::VectorXd features;
  int label = 0;
};

enum class Provenance { kReal, kSynthetic, kValidation, kTest };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Ordered collection of samples sharing one feature dimension and class count.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(int num_classes, int feature_dim, Provenance provenance);

  // Throws ValidationError when the sample breaks the dataset invariants.
  void add(Sample sample);
  void add(const Eigen::VectorXd& features, int label) { add(Sample{features, label}); }

  [[nodiscard]] std::size_t size() const { return samples_.size(); }
  [[nodiscard]] bool empty() const { return samples_.empty(); }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] int feature_dim() const { return feature_dim_; }
  [[nodiscard]] Provenance provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = p; }

  [[nodiscard]] const Sample& operator[](std::size_t i) const { return samples_[i]; }
  [[nodiscard]] const std::vector<Sample>& samples() const { return samples_; }
  void set_label(std::size_t i, int label);

  // Features as columns (D x N) and the matching label vector.
  [[nodiscard]] Eigen::MatrixXd feature_matrix() const;
  [[nodiscard]] std::vector<int> labels() const;

  [[nodiscard]] LabeledDataset subset(const std::vector<std::size_t>& indices) const;
  [[nodiscard]] LabeledDataset of_class(int label) const;
  // First `per_class` samples of each class in dataset order.
  [[nodiscard]] LabeledDataset take_per_class(int per_class) const;
  [[nodiscard]] std::vector<std::size_t> count_per_class() const;

  // Concatenation; provenance of `this` is kept.
  [[nodiscard]] LabeledDataset merged_with(const LabeledDataset& other) const;

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b);

 private:
  std::vector<Sample> samples_;
  int num_classes_ = 0;
  int feature_dim_ = 0;
  Provenance provenance_ = Provenance::kReal;
};

/// Text format: a header line
///   `utilgen-dataset v1 K=<K> D=<D> N=<N> provenance=<tag>`
/// followed by N records `label,f_1,...,f_D` with shortest round-trip decimals.
std::string serialize_dataset(const LabeledDataset& d);
LabeledDataset parse_dataset(const std::string& text);

void save_dataset(const LabeledDataset& d, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace utilgen
