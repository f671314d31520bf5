#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"
#include "screen/model/network.hpp"
#include "screen/views/augment.hpp"

namespace screen::evalx {

using Grid = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Class-token attention of one head over the patch grid.
struct AttentionMap {
  int head = 0;
  int layer = 0;
  Grid raw;         // attention weights, row-major patch order
  Grid normalized;  // min-max scaled to [0,1]; zeros when `constant`
  bool constant = false;
};

/// Min-max scaling. A (numerically) constant grid carries no localization
/// signal: it maps to zeros and is flagged.
inline void normalize_map(AttentionMap& m) {
  const double lo = m.raw.minCoeff();
  const double hi = m.raw.maxCoeff();
  if (hi - lo <= 1e-9 * std::max(1.0, std::abs(hi))) {
    m.normalized = Grid::Zero(m.raw.rows(), m.raw.cols());
    m.constant = true;
    return;
  }
  m.normalized = ((m.raw - lo) / (hi - lo)).max(0.0).min(1.0);
  m.constant = false;
}

inline AttentionMap make_map(Grid raw, int head = 0, int layer = 0) {
  AttentionMap m;
  m.head = head;
  m.layer = layer;
  m.raw = std::move(raw);
  normalize_map(m);
  return m;
}

/// One map per head for an input of the model's global size. `layer` counts
/// from 0; negative values count from the end (-1 is the last block).
template <typename S>
std::vector<AttentionMap> extract_attention(model::Network<S>& net, const Image& image, int layer = -1) {
  const auto& cfg = net.encoder_config();
  if (image.rows() != cfg.input_side || image.cols() != cfg.input_side) {
    invalid("attention input must be " + std::to_string(cfg.input_side) + " square");
  }
  const int resolved = layer < 0 ? cfg.depth + layer : layer;
  if (resolved < 0 || resolved >= cfg.depth) invalid("attention layer " + std::to_string(layer) + " out of range");
  const auto out = net.infer(image, model::Heads::cls, model::AttentionCapture::cls_rows);
  const auto& rows = out.attention.at(0).cls_rows.at(resolved);
  const int g = cfg.grid();
  std::vector<AttentionMap> maps;
  for (int h = 0; h < cfg.heads; ++h) {
    Grid raw(g, g);
    for (int i = 0; i < g * g; ++i) raw.data()[i] = static_cast<double>(rows(h, 1 + i));
    maps.push_back(make_map(std::move(raw), h, resolved));
  }
  return maps;
}

/// 1 where the normalized value reaches theta.
inline Mask threshold_map(const AttentionMap& map, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) invalid("theta must lie in [0,1]");
  return (map.normalized >= theta).cast<std::uint8_t>();
}

/// Any foreground pixel inside a cell marks the cell. Cell boundaries are
/// floor(i*n/g), so uneven divisions are covered without gaps.
inline Mask max_pool(const Mask& mask, int grid) {
  require(grid > 0 && mask.rows() >= grid && mask.cols() >= grid, "pooling grid larger than mask");
  Mask out = Mask::Zero(grid, grid);
  for (int i = 0; i < grid; ++i) {
    const auto r0 = i * mask.rows() / grid;
    const auto r1 = (i + 1) * mask.rows() / grid;
    for (int j = 0; j < grid; ++j) {
      const auto c0 = j * mask.cols() / grid;
      const auto c1 = (j + 1) * mask.cols() / grid;
      out(i, j) = (mask.block(r0, c0, r1 - r0, c1 - c0) != 0).any() ? 1 : 0;
    }
  }
  return out;
}

/// Lesion mask at stored resolution -> patch grid: the model's central window
/// is cut out, then max-pooled.
inline Mask lesion_grid(const Mask& lesion, int grid) {
  Image probe(lesion.rows(), lesion.cols());
  const auto w = views::base_window(probe);
  const auto side = static_cast<Eigen::Index>(w.height);
  const auto top = (lesion.rows() - side) / 2;
  const auto left = (lesion.cols() - side) / 2;
  return max_pool(Mask(lesion.block(top, left, side, side)), grid);
}

/// Intersection over union of two equally sized masks; two empty masks agree
/// perfectly.
inline double iou(const Mask& a, const Mask& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "IoU of masks with different sizes");
  const auto inter = ((a != 0) && (b != 0)).count();
  const auto uni = ((a != 0) || (b != 0)).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// IoU of a grid mask against a lesion mask; full-resolution truth is pooled
/// to the grid first.
inline double localization_score(const Mask& predicted, const Mask& lesion) {
  if (lesion.rows() == predicted.rows() && lesion.cols() == predicted.cols()) return iou(predicted, lesion);
  require(predicted.rows() == predicted.cols(), "prediction grid must be square");
  return iou(predicted, lesion_grid(lesion, static_cast<int>(predicted.rows())));
}

struct HeadSelection {
  int best = 0;
  std::vector<double> mean_iou;  // per head
  int samples = 0;               // samples with ground truth that were scored
};

/// Head with the highest mean IoU over samples that carry a lesion mask.
/// `maps[i]` holds the per-head maps of sample i; ties go to the lower index.
inline HeadSelection select_best_head(std::span<const std::vector<AttentionMap>> maps,
                                      std::span<const std::optional<Mask>> truths, double theta) {
  require(maps.size() == truths.size(), "one truth entry per sample is required");
  HeadSelection sel;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (!truths[i] || count_foreground(*truths[i]) == 0) continue;
    if (sel.mean_iou.empty()) sel.mean_iou.assign(maps[i].size(), 0.0);
    require(maps[i].size() == sel.mean_iou.size(), "every sample needs the same number of heads");
    for (std::size_t h = 0; h < maps[i].size(); ++h) {
      sel.mean_iou[h] += localization_score(threshold_map(maps[i][h], theta), *truths[i]);
    }
    ++sel.samples;
  }
  if (sel.samples == 0) invalid("ground truth required");
  for (auto& v : sel.mean_iou) v /= sel.samples;
  for (std::size_t h = 1; h < sel.mean_iou.size(); ++h) {
    if (sel.mean_iou[h] > sel.mean_iou[sel.best]) sel.best = static_cast<int>(h);
  }
  return sel;
}

}  // namespace screen::evalx
