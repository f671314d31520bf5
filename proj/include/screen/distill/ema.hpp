#pragma once

#include <algorithm>

#include "screen/core/error.hpp"
#include "screen/model/network.hpp"

namespace screen::distill {

/// p_t <- m*p_t + (1-m)*p_s for every parameter (normalization buffers are
/// not averaged). Results are clamped to the segment between the two values
/// so rounding can never step outside it.
template <typename S>
void ema_update(model::ParamList<S> teacher, model::ParamList<S> student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) invalid("ema momentum must lie in [0,1]");
  if (teacher.size() != student.size()) fail("ema_update: parameter count mismatch");
  const S a = static_cast<S>(m);
  const S b = static_cast<S>(1.0 - m);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher[i].param->value;
    const auto& s = student[i].param->value;
    if (t.rows() != s.rows() || t.cols() != s.cols() || teacher[i].name != student[i].name) {
      fail("ema_update: shape mismatch at '" + teacher[i].name + "'");
    }
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const S old = t.data()[j];
      const S src = s.data()[j];
      const S mixed = a * old + b * src;
      t.data()[j] = std::clamp(mixed, std::min(old, src), std::max(old, src));
    }
  }
}

template <typename S>
void ema_update(model::Network<S>& teacher, model::Network<S>& student, double m) {
  ema_update(teacher.params(), student.params(), m);
}

}  // namespace screen::distill
