#include "utilgen/core/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "utilgen/core/error.hpp"

namespace utilgen {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kReal: return "real";
    case Provenance::kSynthetic: return "synthetic";
    case Provenance::kValidation: return "validation";
    case Provenance::kTest: return "test";
  }
  return "real";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "real") return Provenance::kReal;
  if (s == "synthetic") return Provenance::kSynthetic;
  if (s == "validation") return Provenance::kValidation;
  if (s == "test") return Provenance::kTest;
  throw ParseError("unknown provenance '" + s + "'");
}

LabeledDataset::LabeledDataset(int num_classes, int feature_dim, Provenance provenance)
    : num_classes_(num_classes), feature_dim_(feature_dim), provenance_(provenance) {
  if (num_classes <= 0 || feature_dim <= 0)
    throw ValidationError("dataset needs K > 0 and D > 0");
}

void LabeledDataset::add(Sample sample) {
  if (sample.features.size() != feature_dim_)
    throw ValidationError("sample dimension " + std::to_string(sample.features.size()) +
                          " does not match dataset dimension " + std::to_string(feature_dim_));
  if (sample.label < 0 || sample.label >= num_classes_)
    throw ValidationError("label " + std::to_string(sample.label) + " outside [0, " +
                          std::to_string(num_classes_) + ")");
  if (!sample.features.allFinite()) throw ValidationError("sample features must be finite");
  samples_.push_back(std::move(sample));
}

void LabeledDataset::set_label(std::size_t i, int label) {
  if (label < 0 || label >= num_classes_) throw ValidationError("label out of range");
  samples_.at(i).label = label;
}

Eigen::MatrixXd LabeledDataset::feature_matrix() const {
  Eigen::MatrixXd x(feature_dim_, static_cast<Eigen::Index>(samples_.size()));
  for (std::size_t i = 0; i < samples_.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = samples_[i].features;
  return x;
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> y;
  y.reserve(samples_.size());
  for (const auto& s : samples_) y.push_back(s.label);
  return y;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out(num_classes_, feature_dim_, provenance_);
  out.samples_.reserve(indices.size());
  for (auto i : indices) out.samples_.push_back(samples_.at(i));
  return out;
}

LabeledDataset LabeledDataset::of_class(int label) const {
  LabeledDataset out(num_classes_, feature_dim_, provenance_);
  for (const auto& s : samples_)
    if (s.label == label) out.samples_.push_back(s);
  return out;
}

LabeledDataset LabeledDataset::take_per_class(int per_class) const {
  LabeledDataset out(num_classes_, feature_dim_, provenance_);
  std::vector<int> taken(static_cast<std::size_t>(num_classes_), 0);
  for (const auto& s : samples_) {
    if (taken[static_cast<std::size_t>(s.label)] < per_class) {
      ++taken[static_cast<std::size_t>(s.label)];
      out.samples_.push_back(s);
    }
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::count_per_class() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (const auto& s : samples_) ++counts[static_cast<std::size_t>(s.label)];
  return counts;
}

LabeledDataset LabeledDataset::merged_with(const LabeledDataset& other) const {
  if (other.empty() && other.num_classes_ == 0) return *this;  // default-constructed
  if (other.num_classes_ != num_classes_ || other.feature_dim_ != feature_dim_)
    throw ValidationError("cannot merge datasets with different K or D");
  LabeledDataset out = *this;
  out.samples_.insert(out.samples_.end(), other.samples_.begin(), other.samples_.end());
  return out;
}

bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.num_classes_ != b.num_classes_ || a.feature_dim_ != b.feature_dim_ ||
      a.provenance_ != b.provenance_ || a.samples_.size() != b.samples_.size())
    return false;
  for (std::size_t i = 0; i < a.samples_.size(); ++i) {
    if (a.samples_[i].label != b.samples_[i].label) return false;
    if (a.samples_[i].features != b.samples_[i].features) return false;
  }
  return true;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ValidationError("cannot format value");
  return {buf, end};
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError("not a number: '" + std::string(text) + "'");
  return v;
}

std::string serialize_dataset(const LabeledDataset& d) {
  std::string out = "utilgen-dataset v1 K=" + std::to_string(d.num_classes()) +
                    " D=" + std::to_string(d.feature_dim()) + " N=" + std::to_string(d.size()) +
                    " provenance=" + to_string(d.provenance()) + "\n";
  for (const auto& s : d.samples()) {
    out += std::to_string(s.label);
    for (Eigen::Index j = 0; j < s.features.size(); ++j) {
      out += ',';
      out += format_double(s.features[j]);
    }
    out += '\n';
  }
  return out;
}

namespace {

int header_int(const std::string& token, const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) throw ParseError("dataset header: expected " + key + "=");
  try {
    return std::stoi(token.substr(key.size() + 1));
  } catch (const std::exception&) {
    throw ParseError("dataset header: bad value for " + key);
  }
}

}  // namespace

LabeledDataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset: missing header");
  std::istringstream header(line);
  std::string magic, version, k_tok, d_tok, n_tok, p_tok;
  header >> magic >> version >> k_tok >> d_tok >> n_tok >> p_tok;
  if (magic != "utilgen-dataset" || version != "v1")
    throw ParseError("dataset: unrecognized header '" + line + "'");
  const int k = header_int(k_tok, "K");
  const int d = header_int(d_tok, "D");
  const int n = header_int(n_tok, "N");
  if (p_tok.rfind("provenance=", 0) != 0) throw ParseError("dataset header: expected provenance=");
  LabeledDataset out(k, d, provenance_from_string(p_tok.substr(11)));

  for (int record = 1; record <= n; ++record) {
    if (!std::getline(in, line))
      throw ParseError("dataset: record " + std::to_string(record) + " missing (file truncated, " +
                       std::to_string(n) + " expected)");
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != static_cast<std::size_t>(d) + 1)
      throw ParseError("dataset: record " + std::to_string(record) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(d + 1));
    Sample s;
    s.features.resize(d);
    try {
      const double label = parse_double(fields[0]);
      if (label != std::floor(label)) throw ParseError("label is not an integer");
      s.label = static_cast<int>(label);
      for (int j = 0; j < d; ++j) s.features[j] = parse_double(fields[static_cast<std::size_t>(j) + 1]);
      out.add(std::move(s));
    } catch (const std::runtime_error& e) {
      throw ParseError("dataset: record " + std::to_string(record) + ": " + e.what());
    }
  }
  while (std::getline(in, line))
    if (!line.empty()) throw ParseError("dataset: trailing data after " + std::to_string(n) + " records");
  return out;
}

void save_dataset(const LabeledDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << serialize_dataset(d);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_dataset(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace utilgen
