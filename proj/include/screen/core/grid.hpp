#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace screen {

/// Grayscale image, row-major, values nominally in [0, 1].
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary grid (0/1), row-major.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dims {
  int height = 0;
  int width = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

template <typename Derived>
Dims dims_of(const Eigen::ArrayBase<Derived>& a) {
  return {static_cast<int>(a.rows()), static_cast<int>(a.cols())};
}

inline bool is_binary(const Mask& m) { return ((m == 0) || (m == 1)).all(); }

inline std::int64_t count_foreground(const Mask& m) {
  return (m != 0).count();
}

}  // namespace screen
