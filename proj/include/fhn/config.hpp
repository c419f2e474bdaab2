#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fhn/model.hpp"

namespace fhn {

/// Parses TOML text on top of default_config(). Unknown sections or keys raise InvalidConfig.
/// Relative paths inside the file resolve against base_dir.
ModelConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
ModelConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json config_to_json(const ModelConfig& cfg);

/// Reads a `v,w,density` table and checks that it matches the configured grid.
std::vector<double> load_density_table(const std::filesystem::path& path, const UniformGrid1D& v_grid,
                                       const UniformGrid1D& w_grid);

}  // namespace fhn
