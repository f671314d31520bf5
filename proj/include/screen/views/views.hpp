#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "screen/views/augment.hpp"

namespace screen::views {

/// Output sides of the global and local views (224/96 at full scale).
struct ViewSides {
  int global = 224;
  int local = 96;
};

/// Two global views and one local view of one source image.
struct ViewSet {
  Image global_1;
  Image global_2;
  Image local_1;
  std::string source_id;
  std::uint64_t rng_seed = 0;
  std::array<ViewGeometry, 3> geometry{};

  /// Global views first, in the order the losses expect.
  std::array<const Image*, 3> pointers() const { return {&global_1, &global_2, &local_1}; }
};

inline ViewSet make_views(const Image& image, std::uint64_t seed, const AugmentPolicy& policy,
                          ViewSides sides = {}, std::string source_id = {}) {
  require(sides.global > 0 && sides.local > 0, "view sides must be positive");
  ViewSet v;
  v.source_id = std::move(source_id);
  v.rng_seed = seed;
  v.global_1 = apply_tier(image, policy.global_1, sides.global, derive_seed(seed, "global_1"), &v.geometry[0]);
  v.global_2 = apply_tier(image, policy.global_2, sides.global, derive_seed(seed, "global_2"), &v.geometry[1]);
  v.local_1 = apply_tier(image, policy.local, sides.local, derive_seed(seed, "local_1"), &v.geometry[2]);
  return v;
}

inline Image augment_labeled(const Image& image, std::uint64_t seed, const AugmentPolicy& policy,
                             int side = 224) {
  return apply_tier(image, policy.labeled, side, derive_seed(seed, "labeled"));
}

/// Deterministic evaluation input: the central window resampled to `side`.
inline Image prepare_input(const Image& image, int side) {
  return apply_tier(image, TierPolicy{}, side, 0);
}

}  // namespace screen::views
