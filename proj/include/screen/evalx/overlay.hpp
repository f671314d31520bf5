#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "screen/core/png_io.hpp"
#include "screen/corpus/resize.hpp"
#include "screen/evalx/attention.hpp"
#include "screen/views/views.hpp"

namespace screen::evalx {

inline constexpr int kOverlaySide = 224;

/// Jet colormap on [0,1].
inline std::array<float, 3> jet(float v) {
  auto ramp = [](float x) { return std::clamp(1.5f - std::abs(x), 0.0f, 1.0f); };
  const float x = 4.0f * std::clamp(v, 0.0f, 1.0f);
  return {ramp(x - 3.0f), ramp(x - 2.0f), ramp(x - 1.0f)};
}

/// Heatmap over the grayscale view, RGB interleaved, kOverlaySide square.
/// Each pixel blends towards the colormap with weight 0.5*v, so a zero map
/// leaves the image untouched.
inline std::vector<std::uint8_t> overlay_pixels(const Image& image, const AttentionMap& map) {
  const Image gray = views::prepare_input(image, kOverlaySide);
  const Image heat = corpus::resize_image(map.normalized.cast<float>(), kOverlaySide);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(kOverlaySide) * kOverlaySide * 3);
  for (int r = 0; r < kOverlaySide; ++r) {
    for (int c = 0; c < kOverlaySide; ++c) {
      const float v = heat(r, c);
      const float alpha = 0.5f * v;
      const auto color = jet(v);
      for (int k = 0; k < 3; ++k) {
        rgb[(static_cast<std::size_t>(r) * kOverlaySide + c) * 3 + k] =
            png::to_byte((1.0f - alpha) * gray(r, c) + alpha * color[k]);
      }
    }
  }
  return rgb;
}

inline void render_overlay(const Image& image, const AttentionMap& map, const std::filesystem::path& path) {
  png::write_rgb(path, kOverlaySide, kOverlaySide, overlay_pixels(image, map));
}

inline std::string overlay_name(const std::string& sample_id, int head) {
  return sample_id + "_head" + std::to_string(head) + ".png";
}

}  // namespace screen::evalx
