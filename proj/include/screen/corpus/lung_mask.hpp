#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"
#include "screen/corpus/types.hpp"

namespace screen::corpus {

/// Nearest-neighbour resize. Output pixel i samples the source pixel whose
/// centre is nearest to (i + 0.5) * src / dst, i.e. floor((i + 0.5) * src / dst).
inline LungMask resize_mask_nearest(const LungMask& mask, Dims target) {
  const auto src = dims_of(mask.bits);
  if (src.height <= 0 || src.width <= 0) invalid("degenerate mask");
  require(target.height > 0 && target.width > 0, "resize target dimensions must be positive");

  auto index_map = [](int dst, int from) {
    std::vector<int> idx(dst);
    for (int i = 0; i < dst; ++i) {
      // Integer form of floor((i + 0.5) * from / dst).
      const auto num = (2 * static_cast<std::int64_t>(i) + 1) * from;
      idx[i] = static_cast<int>(std::min<std::int64_t>(num / (2 * dst), from - 1));
    }
    return idx;
  };
  const auto rows = index_map(target.height, src.height);
  const auto cols = index_map(target.width, src.width);

  Mask out(target.height, target.width);
  for (int r = 0; r < target.height; ++r) {
    for (int c = 0; c < target.width; ++c) out(r, c) = mask.bits(rows[r], cols[c]) ? 1 : 0;
  }
  return LungMask{std::move(out), target};
}

struct BoundingBox {
  int top = 0;
  int left = 0;
  int bottom = 0;  // inclusive
  int right = 0;   // inclusive

  int height() const { return bottom - top + 1; }
  int width() const { return right - left + 1; }

  BoundingBox united(const BoundingBox& o) const {
    return {std::min(top, o.top), std::min(left, o.left), std::max(bottom, o.bottom),
            std::max(right, o.right)};
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One 8-connected foreground component.
struct Region {
  std::vector<std::int64_t> pixels;  // raster indices, ascending
  BoundingBox box;

  std::int64_t area() const { return static_cast<std::int64_t>(pixels.size()); }
  /// Raster index of the first pixel in scan order.
  std::int64_t anchor() const { return pixels.front(); }
};

/// All 8-connected foreground components, ordered by area descending with
/// ties broken by the smaller raster index of their first pixel.
inline std::vector<Region> connected_regions(const Mask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(h) * w, 0);
  std::vector<Region> regions;
  std::vector<std::int64_t> queue;

  for (int r0 = 0; r0 < h; ++r0) {
    for (int c0 = 0; c0 < w; ++c0) {
      const std::int64_t start = static_cast<std::int64_t>(r0) * w + c0;
      if (!mask(r0, c0) || seen[start]) continue;
      Region region;
      region.box = {r0, c0, r0, c0};
      queue.assign(1, start);
      seen[start] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto idx = queue[head];
        const int r = static_cast<int>(idx / w);
        const int c = static_cast<int>(idx % w);
        region.pixels.push_back(idx);
        region.box = region.box.united({r, c, r, c});
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            const std::int64_t n = static_cast<std::int64_t>(rr) * w + cc;
            if (mask(rr, cc) && !seen[n]) {
              seen[n] = 1;
              queue.push_back(n);
            }
          }
        }
      }
      std::sort(region.pixels.begin(), region.pixels.end());
      regions.push_back(std::move(region));
    }
  }
  std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    return a.anchor() < b.anchor();
  });
  return regions;
}

/// The one or two largest 8-connected components of the mask.
inline std::vector<Region> two_largest_regions(const LungMask& mask) {
  auto regions = connected_regions(mask.bits);
  if (regions.empty()) invalid("no lung region");
  if (regions.size() > 2) regions.resize(2);
  return regions;
}

inline BoundingBox union_box(const std::vector<Region>& regions) {
  require(!regions.empty(), "no regions to crop to");
  BoundingBox box = regions.front().box;
  for (const auto& r : regions) box = box.united(r.box);
  return box;
}

/// Cuts the union bounding box of `regions` out of `image`.
template <typename Derived>
auto crop_to_lungs(const Eigen::ArrayBase<Derived>& image, const std::vector<Region>& regions) {
  const auto box = union_box(regions);
  if (box.top < 0 || box.left < 0 || box.bottom >= image.rows() || box.right >= image.cols()) {
    invalid("region outside image bounds");
  }
  using Plain = typename Derived::PlainObject;
  return Plain(image.derived().block(box.top, box.left, box.height(), box.width()));
}

struct QualityConfig {
  double min_area_ratio = 0.05;
  double max_area_ratio = 0.80;
  /// Largest allowed area ratio between the two largest components.
  double max_component_ratio = 10.0;
};

enum class Verdict { accept, reject };

struct QualityDecision {
  Verdict verdict = Verdict::accept;
  std::string reason;

  bool accepted() const { return verdict == Verdict::accept; }
};

/// Automated segmentation quality screen. Rules run in order: overall area
/// ratio, component count, then balance between the two largest components.
inline QualityDecision quality_gate(const LungMask& mask, const QualityConfig& config = {}) {
  const auto total = static_cast<double>(mask.bits.size());
  const auto fg = static_cast<double>(count_foreground(mask.bits));
  const double ratio = total > 0 ? fg / total : 0.0;
  if (fg == 0) return {Verdict::reject, "no lung region"};
  if (ratio < config.min_area_ratio || ratio > config.max_area_ratio) {
    return {Verdict::reject, "area ratio out of bounds"};
  }
  const auto regions = connected_regions(mask.bits);
  if (regions.size() < 2) return {Verdict::reject, "single lung region"};
  const double balance =
      static_cast<double>(regions[0].area()) / static_cast<double>(regions[1].area());
  if (balance > config.max_component_ratio) return {Verdict::reject, "lung size imbalance"};
  return {Verdict::accept, "ok"};
}

}  // namespace screen::corpus
