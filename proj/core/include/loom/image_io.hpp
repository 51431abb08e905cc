#pragma once

#include <filesystem>

#include "loom/camera_geometry.hpp"

namespace loom {

// Binary PGM (P5), 8- or 16-bit. Values are scaled to [0, 1] on read.
Grid2D read_pgm(const std::filesystem::path& path);

// Writes channel 0 clamped to [0, 1] as a 16-bit P5 image.
void write_pgm(const Grid2D& image, const std::filesystem::path& path);

}  // namespace loom
