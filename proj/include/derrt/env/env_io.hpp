#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derrt/env/environment.hpp"

namespace derrt::env {

inline constexpr int kEnvFormatVersion = 1;

/// Run lengths of alternating values, starting with a run of zeros (which
/// may be empty).
std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& cells);
std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& runs, std::size_t expected);

nlohmann::json to_json(const Configuration& c);
Configuration config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Environment& env);
Environment environment_from_json(const nlohmann::json& j);

void save_environment(const std::filesystem::path& path, const Environment& env);
Environment load_environment(const std::filesystem::path& path);

}  // namespace derrt::env
