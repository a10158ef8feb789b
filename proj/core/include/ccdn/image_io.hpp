#pragma once

#include <filesystem>

#include "ccdn/tensor.hpp"

namespace ccdn {

/// Reads a binary (P5) 8-bit PGM into a single-channel tensor scaled to
/// [0, 1] (pixel / 255).
Tensor read_pgm(const std::filesystem::path& path);

/// Writes a single-channel tensor as binary PGM, mapping [0, 1] to 0..255
/// with rounding; values outside [0, 1] are clamped.
void write_pgm(const Tensor& image, const std::filesystem::path& path);

} // namespace ccdn
