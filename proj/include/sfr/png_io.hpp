#pragma once

#include "sfr/image.hpp"

#include <string>

namespace sfr {

void write_png_rgb8(const std::string& path, const ImageRgb8& img);
ImageRgb8 read_png_rgb8(const std::string& path);

// 16-bit grayscale depth; values are meters * scale, clamped to [0, 65535].
void write_png_depth16(const std::string& path, const ImageD& depth_m, double scale);
ImageD read_png_depth16(const std::string& path, double scale);

}  // namespace sfr
