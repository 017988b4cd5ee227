#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ecgda {

// Minimal PNG encoder (8-bit RGB, stored deflate blocks). Deterministic output.
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<uint8_t>& rgb);

}  // namespace ecgda
