#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvdf/common.hpp"

namespace mvdf {

// Interleaved RGB, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(size_t(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return data[(size_t(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(size_t(y) * width + x) * 3 + c]; }
  size_t pixel_count() const { return size_t(height) * width; }
};

// Single channel, 0 = static scene, 255 = transient.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(size_t(h) * w, 0) {}

  uint8_t& at(int y, int x) { return data[size_t(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[size_t(y) * width + x]; }
  bool any() const {
    for (uint8_t v : data)
      if (v) return true;
    return false;
  }
};

// 8-bit RGB PNG. Round trip write -> read is exact at 1/255 quantization.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// 8-bit grayscale PNG for masks.
void write_mask_png(const std::string& path, const Mask& mask);
Mask read_mask_png(const std::string& path);

std::array<float, 3> channel_means(const Image& img);

// Hue rotation operates in HSV space; h in [0, 1).
std::array<float, 3> rgb_to_hsv(float r, float g, float b);
std::array<float, 3> hsv_to_rgb(float h, float s, float v);

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

}  // namespace mvdf
