// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "fcnet/tensor.hpp"

namespace fcnet {

/// Reads an 8-bit PNG as a 1×3×H×W tensor scaled by 1/255.
Tensor read_png(const std::filesystem::path& path);

/// Extents of a PNG without decoding pixel data.
std::pair<int, int> png_extents(const std::filesystem::path& path);

/// Writes a 1×C×H×W tensor (C = 1 or 3) as 8-bit PNG after clamping to
/// [0, 1] and rounding half up. The file appears atomically.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Bilinear downscale so that the longer side is at most `max_side`.
Tensor limit_longer_side(const Tensor& image, int max_side);

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace fcnet
