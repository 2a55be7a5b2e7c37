#pragma once

#include <string>

#include "gequnet/tensor.hpp"

namespace gequnet {

// Reads an 8-bit grayscale PNG into an [H,W] tensor with values v/255.
// Throws std::runtime_error with the path for missing, corrupt, or
// non-grayscale files.
Tensor read_png_gray(const std::string& path);

// Writes [H,W] values in [0,1] as an 8-bit grayscale PNG,
// gray = round(255 * clamp01(v)). Deterministic byte output.
void write_png_gray(const std::string& path, const Tensor& image);

}  // namespace gequnet
