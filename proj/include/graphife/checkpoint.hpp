#pragma once

#include "graphife/adam.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>

namespace graphife {

// Checkpoint layout (JSON):
//   {"parameters": {"<name>": {"shape": [rows, cols], "data": [row-major values]}, ...},
//    "optimizers": {"<group>": {"step": t, "first_moment": [...], "second_moment": [...]}},
//    "meta": {...}}
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json params_to_json(std::span<const ParamRef> params);
/// Fills every ref from `j`; a missing name or a shape mismatch is a DataError.
void params_from_json(const nlohmann::json& j, std::span<const ParamRef> params);

nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

}  // namespace graphife
