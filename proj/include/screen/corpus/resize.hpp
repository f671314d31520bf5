#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"

namespace screen::corpus {

/// Bilinear resize with half-pixel centres and edge clamping. Each output is a
/// convex combination of inputs, so the value range is preserved.
inline Image resize_image(const Image& image, int out_h, int out_w) {
  require(image.size() > 0, "resize of an empty image");
  require(out_h > 0 && out_w > 0, "resize side must be positive");
  const int in_h = static_cast<int>(image.rows());
  const int in_w = static_cast<int>(image.cols());
  if (in_h == out_h && in_w == out_w) return image;

  struct Tap {
    int i0, i1;
    float w1;
  };
  auto taps = [](int out, int in) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double x = (i + 0.5) * scale - 0.5;
      x = std::clamp(x, 0.0, static_cast<double>(in - 1));
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, in - 1);
      t[i] = {x0, x1, static_cast<float>(x - x0)};
    }
    return t;
  };
  const auto ty = taps(out_h, in_h);
  const auto tx = taps(out_w, in_w);
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const auto& y = ty[r];
    for (int c = 0; c < out_w; ++c) {
      const auto& x = tx[c];
      const float top = image(y.i0, x.i0) * (1 - x.w1) + image(y.i0, x.i1) * x.w1;
      const float bot = image(y.i1, x.i0) * (1 - x.w1) + image(y.i1, x.i1) * x.w1;
      out(r, c) = std::clamp(top * (1 - y.w1) + bot * y.w1, 0.0f, 1.0f);
    }
  }
  return out;
}

inline Image resize_image(const Image& image, int side) {
  require(side > 0, "resize side must be positive");
  return resize_image(image, side, side);
}

/// Central side x side window; the offset rounds down when the margin is odd.
template <typename Derived>
auto center_crop(const Eigen::ArrayBase<Derived>& image, int side) {
  require(side > 0 && side <= image.rows() && side <= image.cols(),
          "center crop larger than image");
  const auto top = (image.rows() - side) / 2;
  const auto left = (image.cols() - side) / 2;
  using Plain = typename Derived::PlainObject;
  return Plain(image.derived().block(top, left, side, side));
}

}  // namespace screen::corpus
