#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "screen/core/error.hpp"

namespace screen::distill {

/// Half-cosine from start (t=0) to end (t=total). Written as a convex
/// combination so both endpoints come out exactly.
inline double cosine_schedule(double t, double total, double start, double end) {
  if (total <= 0) invalid("cosine schedule needs a positive horizon");
  if (t < 0 || t > total) invalid("cosine schedule step outside [0, total]");
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
  return start * w + end * (1.0 - w);
}

/// Linear ramp from start to end over `total` steps, then constant.
inline double linear_warmup(double t, double total, double start, double end) {
  if (total <= 0 || t >= total) return end;
  const double w = std::max(t, 0.0) / total;
  return start * (1.0 - w) + end * w;
}

/// Value of a cosine schedule at step t of an n-step run, reaching `end` on
/// the last step.
inline double scheduled(long t, long n, double start, double end) {
  if (n <= 1) return start;
  return cosine_schedule(static_cast<double>(t), static_cast<double>(n - 1), start, end);
}

}  // namespace screen::distill
