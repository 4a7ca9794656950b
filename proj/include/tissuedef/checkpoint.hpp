#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "tissuedef/autodiff.hpp"

namespace tissuedef {

inline constexpr int kCheckpointFormatVersion = 1;

/// JSON document: {"format_version": 1, "parameters": {name: {"shape": [...],
/// "data": base64 of little-endian float64}}}.
nlohmann::json checkpoint_to_json(const ParamStore& params);
ParamStore checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

std::string base64_encode_doubles(const Tensor& t);
std::vector<double> base64_decode_doubles(const std::string& text);

}  // namespace tissuedef
