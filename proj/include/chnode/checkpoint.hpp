#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "chnode/model.hpp"

namespace chnode {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j, const std::string& what);

/// Checkpoint document: arch, n, N, h, kappa, gamma, J, every layer (K, b, L
/// as row-major nested arrays), input/output affine maps and the init seed.
nlohmann::json checkpoint_to_json(const ModelSpec& spec);
ModelSpec checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const ModelSpec& spec, const std::filesystem::path& path);
ModelSpec load_checkpoint(const std::filesystem::path& path);

}  // namespace chnode
