#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"
#include "screen/core/rng.hpp"

namespace screen::views {

enum class Op : unsigned {
  resize = 1u << 0,
  crop = 1u << 1,
  color_jitter = 1u << 2,
  rotation = 1u << 3,
  auto_contrast = 1u << 4,
  equalization = 1u << 5,
  blur = 1u << 6,
};

inline constexpr std::array<Op, 7> kAllOps = {Op::resize,        Op::crop,          Op::color_jitter,
                                              Op::rotation,      Op::auto_contrast, Op::equalization,
                                              Op::blur};

inline std::string_view to_string(Op op) {
  switch (op) {
    case Op::resize: return "resize";
    case Op::crop: return "crop";
    case Op::color_jitter: return "color_jitter";
    case Op::rotation: return "rotation";
    case Op::auto_contrast: return "auto_contrast";
    case Op::equalization: return "equalization";
    case Op::blur: return "blur";
  }
  return "?";
}

class OpSet {
 public:
  constexpr OpSet() = default;
  constexpr OpSet(std::initializer_list<Op> ops) {
    for (Op op : ops) bits_ |= static_cast<unsigned>(op);
  }
  static constexpr OpSet all() { return OpSet{Op::resize, Op::crop, Op::color_jitter, Op::rotation,
                                              Op::auto_contrast, Op::equalization, Op::blur}; }

  constexpr bool has(Op op) const { return (bits_ & static_cast<unsigned>(op)) != 0; }
  constexpr void set(Op op, bool on = true) {
    if (on) {
      bits_ |= static_cast<unsigned>(op);
    } else {
      bits_ &= ~static_cast<unsigned>(op);
    }
  }
  constexpr bool subset_of(OpSet other) const { return (bits_ & ~other.bits_) == 0; }
  int count() const { return std::popcount(bits_); }
  bool empty() const { return bits_ == 0; }

  /// Comma-separated op names, "none" when empty.
  std::string str() const {
    std::string out;
    for (Op op : kAllOps) {
      if (!has(op)) continue;
      if (!out.empty()) out += ',';
      out += to_string(op);
    }
    return out.empty() ? "none" : out;
  }

  static OpSet parse(std::string_view text) {
    OpSet out;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty() || item == "none") continue;
      bool found = false;
      for (Op op : kAllOps) {
        if (item == to_string(op)) {
          out.set(op);
          found = true;
        }
      }
      if (!found) invalid("unknown augmentation op '" + item + "'");
    }
    return out;
  }

  friend constexpr bool operator==(OpSet, OpSet) = default;

 private:
  unsigned bits_ = 0;
};

/// Parameters of one augmentation tier.
struct TierPolicy {
  OpSet ops;
  /// Fraction of source area covered by the sampled window (crop op).
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  /// Aspect-ratio range of the window (resize op).
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  double rotation_limit_deg = 10.0;
  double jitter_strength = 0.2;
  double jitter_prob = 0.8;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double blur_prob = 0.5;
  double auto_contrast_prob = 0.5;
  double equalize_prob = 0.3;

  void validate(std::string_view tier) const {
    const std::string where = " (" + std::string(tier) + ")";
    auto prob = [&](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) invalid(std::string(name) + " must lie in [0,1]" + where);
    };
    if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
      invalid("crop_scale range must satisfy 0 < min <= max <= 1" + where);
    }
    if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) invalid("aspect range is empty" + where);
    if (!(rotation_limit_deg >= 0.0 && rotation_limit_deg <= 180.0)) {
      invalid("rotation_limit_deg must lie in [0,180]" + where);
    }
    if (!(jitter_strength >= 0.0 && jitter_strength < 1.0)) invalid("jitter_strength must lie in [0,1)" + where);
    if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max)) invalid("blur sigma range is empty" + where);
    prob(jitter_prob, "jitter_prob");
    prob(blur_prob, "blur_prob");
    prob(auto_contrast_prob, "auto_contrast_prob");
    prob(equalize_prob, "equalize_prob");
  }
};

/// Tiers for labeled training and for the three self-supervised views.
struct AugmentPolicy {
  TierPolicy labeled;
  TierPolicy global_1;
  TierPolicy global_2;
  TierPolicy local;

  static AugmentPolicy defaults() {
    AugmentPolicy p;
    p.labeled.ops = OpSet::all();
    p.labeled.crop_scale_min = 0.7;
    p.labeled.blur_prob = 0.3;
    p.labeled.auto_contrast_prob = 0.3;
    p.labeled.equalize_prob = 0.2;

    p.global_1.ops = {Op::resize, Op::crop, Op::color_jitter};

    p.global_2.ops = {Op::resize, Op::crop, Op::color_jitter, Op::rotation, Op::auto_contrast, Op::blur};

    p.local.ops = OpSet::all();
    p.local.crop_scale_min = 0.2;
    p.local.crop_scale_max = 0.5;
    p.local.jitter_prob = 1.0;
    return p;
  }

  /// Every op disabled in every tier: views reduce to central crops.
  static AugmentPolicy identity() {
    AugmentPolicy p;
    p.labeled.ops = p.global_1.ops = p.global_2.ops = p.local.ops = OpSet{};
    return p;
  }

  void validate() const {
    labeled.validate("labeled");
    global_1.validate("global_1");
    global_2.validate("global_2");
    local.validate("local");
    if (!global_1.ops.subset_of(global_2.ops) || !global_2.ops.subset_of(local.ops)) {
      invalid("augmentation tiers must be nested: global_1 within global_2 within local");
    }
  }
};

/// Where a view came from in its source image.
struct ViewGeometry {
  double center_row = 0.0;
  double center_col = 0.0;
  double height = 0.0;  // window size in source pixels, before rotation
  double width = 0.0;
  double angle_deg = 0.0;
  /// Window area over source area.
  double area_fraction = 0.0;
};

/// Reflects a continuous sample coordinate into [0, n-1] without repeating the
/// edge sample, so rotated windows never see a constant fill.
inline double reflect_coordinate(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(std::abs(x), period);
  return x > n - 1 ? period - x : x;
}

inline float sample_bilinear(const Image& img, double r, double c) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  r = reflect_coordinate(r, h);
  c = reflect_coordinate(c, w);
  const int r0 = std::min(static_cast<int>(r), h - 1);
  const int c0 = std::min(static_cast<int>(c), w - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  const int c1 = std::min(c0 + 1, w - 1);
  const float fr = static_cast<float>(r - r0);
  const float fc = static_cast<float>(c - c0);
  const float top = img(r0, c0) * (1 - fc) + img(r0, c1) * fc;
  const float bot = img(r1, c0) * (1 - fc) + img(r1, c1) * fc;
  return top * (1 - fr) + bot * fr;
}

/// Resamples a (possibly rotated) window of the source onto an out x out grid.
/// Output pixel centres map linearly onto the window; when the window is much
/// larger than the output, each pixel averages a k x k grid of sub-samples.
inline Image warp_window(const Image& src, const ViewGeometry& g, int out) {
  require(out > 0, "view side must be positive");
  const double theta = g.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const int k = std::max(1, static_cast<int>(std::ceil(std::max(g.height, g.width) / out - 1e-9)));
  const double inv = 1.0 / (static_cast<double>(k) * k);
  Image dst(out, out);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < out; ++j) {
      double acc = 0.0;
      for (int a = 0; a < k; ++a) {
        const double v = (i + (a + 0.5) / k) / out - 0.5;
        for (int b = 0; b < k; ++b) {
          const double u = (j + (b + 0.5) / k) / out - 0.5;
          const double dy = v * g.height;
          const double dx = u * g.width;
          const double y = g.center_row + sn * dx + cs * dy;
          const double x = g.center_col + cs * dx - sn * dy;
          acc += sample_bilinear(src, y - 0.5, x - 0.5);
        }
      }
      dst(i, j) = std::clamp(static_cast<float>(acc * inv), 0.0f, 1.0f);
    }
  }
  return dst;
}

/// Largest square with a side divisible by 8 that fits the image, centred.
/// This is the model's field of view when no crop is sampled.
inline ViewGeometry base_window(const Image& src) {
  const int side = static_cast<int>(std::min(src.rows(), src.cols())) / 8 * 8;
  require(side > 0, "image too small for a view");
  ViewGeometry g;
  g.height = g.width = side;
  g.center_row = static_cast<double>((src.rows() - side) / 2) + side / 2.0;
  g.center_col = static_cast<double>((src.cols() - side) / 2) + side / 2.0;
  g.area_fraction = static_cast<double>(side) * side / static_cast<double>(src.size());
  return g;
}

/// Draws the window for a tier: crop picks area and position, resize picks the
/// aspect ratio, rotation picks an angle within the limit.
inline ViewGeometry sample_geometry(const Image& src, const TierPolicy& tier, Rng& rng) {
  ViewGeometry g = base_window(src);
  const double H = static_cast<double>(src.rows());
  const double W = static_cast<double>(src.cols());
  if (tier.ops.has(Op::crop) || tier.ops.has(Op::resize)) {
    const double area = H * W;
    double scale = g.area_fraction;
    if (tier.ops.has(Op::crop)) scale = rng.uniform(tier.crop_scale_min, tier.crop_scale_max);
    double h = 0.0;
    double w = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 10 && tier.ops.has(Op::resize); ++attempt) {
      const double ratio =
          std::exp(rng.uniform(std::log(tier.aspect_min), std::log(tier.aspect_max)));
      w = std::sqrt(scale * area * ratio);
      h = std::sqrt(scale * area / ratio);
      if (w <= W && h <= H) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      // Square fallback; fits because scale <= 1 (exactly for square sources).
      w = std::min(std::sqrt(scale * area), W);
      h = std::min(scale * area / w, H);
    }
    g.height = h;
    g.width = w;
    g.area_fraction = h * w / area;
    if (tier.ops.has(Op::crop)) {
      g.center_row = rng.uniform(h / 2.0, H - h / 2.0);
      g.center_col = rng.uniform(w / 2.0, W - w / 2.0);
    } else {
      g.center_row = H / 2.0;
      g.center_col = W / 2.0;
    }
  }
  if (tier.ops.has(Op::rotation)) {
    g.angle_deg = rng.uniform(-tier.rotation_limit_deg, tier.rotation_limit_deg);
  }
  return g;
}

inline void color_jitter(Image& img, double strength, Rng& rng) {
  const float brightness = static_cast<float>(rng.uniform(1.0 - strength, 1.0 + strength));
  const float contrast = static_cast<float>(rng.uniform(1.0 - strength, 1.0 + strength));
  img = (img * brightness).min(1.0f);
  const float mean = img.mean();
  img = ((img - mean) * contrast + mean).max(0.0f).min(1.0f);
}

/// Stretches the value range to [0,1]; constant images are left alone.
inline void auto_contrast(Image& img) {
  const float lo = img.minCoeff();
  const float hi = img.maxCoeff();
  if (hi <= lo) return;
  img = ((img - lo) / (hi - lo)).max(0.0f).min(1.0f);
}

/// Histogram equalization over 256 levels (the classic lookup-table form).
inline void equalize(Image& img) {
  std::array<long, 256> hist{};
  auto level = [](float v) { return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  for (Eigen::Index i = 0; i < img.size(); ++i) ++hist[level(img.data()[i])];
  int last = 255;
  while (last > 0 && hist[last] == 0) --last;
  const long step = (static_cast<long>(img.size()) - hist[last]) / 255;
  if (step == 0) return;
  std::array<float, 256> lut{};
  long n = step / 2;
  for (int i = 0; i < 256; ++i) {
    lut[i] = static_cast<float>(std::min(n / step, 255L)) / 255.0f;
    n += hist[i];
  }
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = lut[level(img.data()[i])];
}

inline std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    total += v;
  }
  for (auto& v : k) v = static_cast<float>(v / total);
  return k;
}

/// Separable Gaussian blur with reflected borders.
inline void gaussian_blur(Image& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  auto idx = [](int i, int n) { return static_cast<int>(reflect_coordinate(i, n)); };
  Image tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float acc = 0.0f;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * img(r, idx(c + t, w));
      tmp(r, c) = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float acc = 0.0f;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * tmp(idx(r + t, h), c);
      img(r, c) = std::clamp(acc, 0.0f, 1.0f);
    }
  }
}

/// Applies one tier to a source image. Without geometric ops the output is
/// the central window; at the window's native size that is an exact crop.
inline Image apply_tier(const Image& src, const TierPolicy& tier, int out, std::uint64_t seed,
                        ViewGeometry* geometry = nullptr) {
  require(src.size() > 0, "augmentation of an empty image");
  Rng rng(seed);
  const ViewGeometry g = sample_geometry(src, tier, rng);
  if (geometry) *geometry = g;

  Image img;
  const bool integral = g.angle_deg == 0.0 && g.height == out && g.width == out &&
                        g.center_row == std::floor(g.center_row) + (out % 2) * 0.5 &&
                        g.center_col == std::floor(g.center_col) + (out % 2) * 0.5;
  if (integral) {
    const auto top = static_cast<Eigen::Index>(g.center_row - out / 2.0);
    const auto left = static_cast<Eigen::Index>(g.center_col - out / 2.0);
    img = src.block(top, left, out, out);
  } else {
    img = warp_window(src, g, out);
  }

  if (tier.ops.has(Op::color_jitter) && rng.bernoulli(tier.jitter_prob)) {
    color_jitter(img, tier.jitter_strength, rng);
  }
  if (tier.ops.has(Op::auto_contrast) && rng.bernoulli(tier.auto_contrast_prob)) auto_contrast(img);
  if (tier.ops.has(Op::equalization) && rng.bernoulli(tier.equalize_prob)) equalize(img);
  if (tier.ops.has(Op::blur) && rng.bernoulli(tier.blur_prob)) {
    gaussian_blur(img, rng.uniform(tier.blur_sigma_min, tier.blur_sigma_max));
  }
  return img;
}

}  // namespace screen::views
