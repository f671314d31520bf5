#pragma once

#include <optional>

#include "screen/corpus/lung_mask.hpp"
#include "screen/corpus/resize.hpp"
#include "screen/corpus/types.hpp"

namespace screen::corpus {

inline constexpr int kStoredSide = 225;

struct PreprocessedSample {
  Image image;
  LungMask lungs;
  std::optional<Mask> lesion;
  QualityDecision decision;
};

/// Mask-driven preparation of one radiograph: align the mask to the image
/// (nearest neighbour), keep the two largest lung regions, blank everything
/// outside them, crop to their union box and resize to `side`.
inline PreprocessedSample preprocess_sample(const Image& image, const LungMask& mask,
                                            const std::optional<Mask>& lesion,
                                            const QualityConfig& quality = {},
                                            int side = kStoredSide) {
  PreprocessedSample out;
  const auto aligned = resize_mask_nearest(mask, dims_of(image));
  out.decision = quality_gate(aligned, quality);
  const auto regions = two_largest_regions(aligned);

  Mask keep = Mask::Zero(aligned.bits.rows(), aligned.bits.cols());
  for (const auto& r : regions) {
    for (auto idx : r.pixels) keep.data()[idx] = 1;
  }
  Image masked = image * keep.cast<float>();

  const auto cropped = crop_to_lungs(masked, regions);
  out.image = resize_image(cropped, side, side);
  out.lungs = resize_mask_nearest(LungMask::from_bits(crop_to_lungs(keep, regions)), {side, side});
  if (lesion) {
    require(dims_of(*lesion) == dims_of(image), "lesion mask dimensions differ from image");
    Mask inside = *lesion * keep;
    out.lesion = resize_mask_nearest(LungMask::from_bits(crop_to_lungs(inside, regions)),
                                     {side, side})
                     .bits;
  }
  return out;
}

}  // namespace screen::corpus
