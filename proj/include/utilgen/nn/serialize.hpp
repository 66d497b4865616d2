#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "json.hpp"
#include "utilgen/nn/mlp.hpp"

namespace utilgen::nn {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::MatrixXd& m);  // row-major nested arrays
nlohmann::json to_json(const Mlp& mlp);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
Mlp mlp_from_json(const nlohmann::json& j);

/// Checkpoint envelope: {"kind", "format_version", "config_hash", "payload"}.
/// Reading rejects a different kind or a newer format version.
void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_hash,
                      const nlohmann::json& payload);
nlohmann::json read_checkpoint(const std::filesystem::path& path, const std::string& kind,
                               std::string* config_hash = nullptr);

}  // namespace utilgen::nn
