#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "screen/core/atomic_file.hpp"
#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"

namespace screen::png {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> gray;
};

inline Decoded decode_gray8(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail("cannot open image: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Decoded out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(out.width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported PNG layout: " + path.string());
  }
  out.gray.resize(static_cast<std::size_t>(out.height) * out.width);
  std::vector<png_bytep> rows(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = out.gray.data() + r * out.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* buffer = static_cast<std::string*>(png_get_io_ptr(png));
  buffer->append(reinterpret_cast<const char*>(data), length);
}

inline void flush_callback(png_structp) {}

/// Encodes 8-bit pixels (1 or 3 channels) into an in-memory PNG. No time
/// chunks are written, so identical pixels give identical bytes.
inline std::string encode(int height, int width, int channels,
                          std::span<const std::uint8_t> pixels) {
  std::string buffer;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG encoding failed");
  }
  png_set_write_fn(png, &buffer, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) {
    rows[r] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return buffer;
}

}  // namespace detail

inline std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

/// Reads any 8/16-bit PNG as grayscale in [0, 1].
inline Image read_gray(const std::filesystem::path& path) {
  const auto d = detail::decode_gray8(path);
  Image img(d.height, d.width);
  for (std::size_t i = 0; i < d.gray.size(); ++i) img.data()[i] = d.gray[i] / 255.0f;
  return img;
}

/// Reads a mask PNG: values >= 128 are foreground.
inline Mask read_mask(const std::filesystem::path& path) {
  const auto d = detail::decode_gray8(path);
  Mask m(d.height, d.width);
  for (std::size_t i = 0; i < d.gray.size(); ++i) m.data()[i] = d.gray[i] >= 128 ? 1 : 0;
  return m;
}

inline void write_gray(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.data()[i]);
  write_file_atomic(path, detail::encode(static_cast<int>(img.rows()),
                                         static_cast<int>(img.cols()), 1, bytes));
}

/// Writes a mask as 0 (background) / 255 (foreground).
inline void write_mask(const std::filesystem::path& path, const Mask& m) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(m.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = m.data()[i] ? 255 : 0;
  write_file_atomic(path, detail::encode(static_cast<int>(m.rows()),
                                         static_cast<int>(m.cols()), 1, bytes));
}

/// Writes interleaved RGB bytes.
inline void write_rgb(const std::filesystem::path& path, int height, int width,
                      std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) fail("RGB buffer size mismatch");
  write_file_atomic(path, detail::encode(height, width, 3, rgb));
}

}  // namespace screen::png
