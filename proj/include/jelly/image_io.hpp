#pragma once

#include <filesystem>

#include "jelly/image.hpp"

namespace jelly::io {

/// Decodes an 8-bit PNG (gray, gray+alpha, RGB or RGBA) to [0,1] grayscale
/// as value/255. Color inputs are converted by channel average.
Image read_png_gray(const std::filesystem::path& path);

/// Writes intensities as 8-bit gray, round(v*255) with clamping.
void write_png_gray(const std::filesystem::path& path, const Image& image);

void write_png_mask(const std::filesystem::path& path, const Mask& mask, bool black_on_white);
Mask read_png_mask(const std::filesystem::path& path, bool black_on_white);

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png_rgb(const std::filesystem::path& path);

/// Snap to the 8-bit grid so a write/read cycle is lossless.
inline float quantize8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<float>(static_cast<int>(c * 255.0f + 0.5f)) / 255.0f;
}

}  // namespace jelly::io
