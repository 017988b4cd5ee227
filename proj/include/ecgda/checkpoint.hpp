#pragma once

#include <filesystem>
#include <vector>

#include "ecgda/tensor.hpp"

namespace ecgda::ad {

// Binary parameter checkpoint: header {format_version, param_count}, then per
// parameter {name, shape, float32 little-endian data}. Round-trips byte-exact.
void save_params(const std::filesystem::path& path, const std::vector<const Param*>& params);
void save_params(const std::filesystem::path& path, const std::vector<Param*>& params);

// Loads into existing parameters; names and shapes must match the file.
void load_params(const std::filesystem::path& path, const std::vector<Param*>& params);

}  // namespace ecgda::ad
