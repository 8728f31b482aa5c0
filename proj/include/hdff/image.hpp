// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hdff/tensor.hpp"

namespace hdff {

// Decoded 8-bit RGB raster, interleaved HWC.
struct RgbImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;
};

// Planar 3×H×W image with values in [0,1]. Every stored value lies on the
// 2^-24 grid, so unit-range arithmetic such as 1 - x is exact and ops like
// Invert are bitwise involutions.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const Image& other) const = default;
};

inline constexpr double kGridScale = 16777216.0;  // 2^24

// Clamp to [0,1] and snap onto the 2^-24 grid.
float quantize_unit(double v);

inline constexpr std::array<double, 3> kImagenetMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImagenetStd = {0.229, 0.224, 0.225};

// PNG/JPEG decode. Rejects non-RGB inputs (grayscale, alpha) instead of
// converting them.
RgbImage decode_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Antialiased bilinear resize (triangle filter widened by the downscale
// factor), separable, computed in double.
Image resize_bilinear(const Image& src, int out_h, int out_w);

// Unit-scale then resize to input_size×input_size.
Image preprocess(const RgbImage& image, int input_size);

// (x - mean_c) / std_c with the ImageNet constants, written into dst at the
// given batch slot of a B×3×S×S tensor.
void normalize_into(const Image& image, Tensor& dst, std::int64_t slot);
Tensor normalize(const Image& image);

}  // namespace hdff
