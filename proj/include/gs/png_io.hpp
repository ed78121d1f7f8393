#pragma once

#include <string>

#include "gs/tensor.hpp"

namespace gs {

// 8-bit RGB image as [3,H,W] with values in [0,1].
Tensor read_png_rgb(const std::string& path);

// Clamps to [0,1] and quantizes with round(v*255). Byte output is a pure
// function of the pixel values.
void write_png_rgb(const std::string& path, const Tensor& img);

// [H,W] scalar map rendered min-max normalized to 8-bit gray; a constant map
// becomes mid gray.
void write_png_gray(const std::string& path, const Tensor& map);

}  // namespace gs
