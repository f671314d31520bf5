#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/rng.hpp"

namespace screen::model {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// A trainable array with its gradient accumulator.
template <typename S>
struct Param {
  Matrix<S> value;
  Matrix<S> grad;
  /// Whether weight decay applies (false for biases and normalization gains).
  bool decay = true;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols, bool decays)
      : value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)), decay(decays) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename S>
struct NamedParam {
  std::string name;
  Param<S>* param;
};

template <typename S>
struct NamedBuffer {
  std::string name;
  Matrix<S>* value;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

template <typename S>
using BufferList = std::vector<NamedBuffer<S>>;

/// Truncated normal at +-2 std, as used for transformer weights.
template <typename S>
void trunc_normal(Matrix<S>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = rng.normal();
    while (std::abs(v) > 2.0) v = rng.normal();
    m.data()[i] = static_cast<S>(v * stddev);
  }
}

template <typename S>
void uniform_fill(Matrix<S>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
}

}  // namespace screen::model
