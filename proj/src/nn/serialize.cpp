#include "utilgen/nn/serialize.hpp"

#include <fstream>

#include "utilgen/core/error.hpp"

namespace utilgen::nn {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

json to_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("checkpoint: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("checkpoint: expected a non-empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("checkpoint: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers()) layers.push_back({{"weight", to_json(l.weight)}, {"bias", to_json(l.bias)}});
  return {{"activation", to_string(mlp.hidden_activation())}, {"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  try {
    Rng unused(0);
    std::vector<int> widths;
    const auto& layers = j.at("layers");
    if (layers.empty()) throw ParseError("checkpoint: network without layers");
    widths.push_back(static_cast<int>(layers[0].at("weight")[0].size()));
    for (const auto& l : layers) widths.push_back(static_cast<int>(l.at("weight").size()));
    Mlp mlp(widths, activation_from_string(j.at("activation").get<std::string>()), unused);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& dense = mlp.layers()[i];
      Eigen::MatrixXd w = matrix_from_json(layers[i].at("weight"));
      Eigen::VectorXd b = vector_from_json(layers[i].at("bias"));
      if (w.rows() != dense.weight.rows() || w.cols() != dense.weight.cols() || b.size() != dense.bias.size())
        throw ParseError("checkpoint: inconsistent layer shapes");
      dense.weight = std::move(w);
      dense.bias = std::move(b);
    }
    return mlp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_hash,
                      const json& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  const json doc = {{"kind", kind},
                    {"format_version", kCheckpointFormatVersion},
                    {"config_hash", config_hash},
                    {"payload", payload}};
  out << doc.dump() << '\n';
}

json read_checkpoint(const std::filesystem::path& path, const std::string& kind, std::string* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != kind)
    throw ParseError(path.string() + ": expected a '" + kind + "' checkpoint");
  if (doc.value("format_version", 0) > kCheckpointFormatVersion)
    throw ParseError(path.string() + ": unsupported checkpoint format version");
  if (config_hash) *config_hash = doc.value("config_hash", "");
  return doc.at("payload");
}

}  // namespace utilgen::nn
