#include "mvdf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace mvdf {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_byte(float v) {
  float c = clamp01(v);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

void write_png_raw(const std::string& path, const uint8_t* rows, int h, int w, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, w, h, 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rows + size_t(y) * w * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png_raw(const std::string& path, std::vector<uint8_t>& out, int& h, int& w,
                  int channels) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
  } else {
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out.resize(size_t(h) * w * channels);
  for (int y = 0; y < h; ++y) png_read_row(png, out.data() + size_t(y) * w * channels, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  MVDF_CHECK(img.height > 0 && img.width > 0, "write_png: empty image");
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) bytes[i] = to_byte(img.data[i]);
  write_png_raw(path, bytes.data(), img.height, img.width, 3);
}

Image read_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  int h = 0, w = 0;
  read_png_raw(path, bytes, h, w, 3);
  Image img(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = float(bytes[i]) / 255.0f;
  return img;
}

void write_mask_png(const std::string& path, const Mask& mask) {
  MVDF_CHECK(mask.height > 0 && mask.width > 0, "write_mask_png: empty mask");
  write_png_raw(path, mask.data.data(), mask.height, mask.width, 1);
}

Mask read_mask_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  int h = 0, w = 0;
  read_png_raw(path, bytes, h, w, 1);
  Mask m(h, w);
  m.data = std::move(bytes);
  return m;
}

std::array<float, 3> channel_means(const Image& img) {
  double acc[3] = {0, 0, 0};
  size_t n = img.pixel_count();
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) acc[c] += img.data[i * 3 + c];
  return {float(acc[0] / double(n)), float(acc[1] / double(n)), float(acc[2] / double(n))};
}

std::array<float, 3> rgb_to_hsv(float r, float g, float b) {
  float mx = std::max(r, std::max(g, b));
  float mn = std::min(r, std::min(g, b));
  float d = mx - mn;
  float h = 0.0f;
  if (d > 0.0f) {
    if (mx == r)
      h = (g - b) / d;
    else if (mx == g)
      h = 2.0f + (b - r) / d;
    else
      h = 4.0f + (r - g) / d;
    h /= 6.0f;
    if (h < 0.0f) h += 1.0f;
  }
  float s = mx > 0.0f ? d / mx : 0.0f;
  return {h, s, mx};
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  if (s <= 0.0f) return {v, v, v};
  float hh = h - std::floor(h);
  hh *= 6.0f;
  int i = static_cast<int>(hh);
  if (i > 5) i = 5;
  float f = hh - float(i);
  float p = v * (1.0f - s);
  float q = v * (1.0f - s * f);
  float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace mvdf
