#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"

namespace screen::corpus {

enum class Label { normal, tb };

/// `unassigned` marks rows that have not been through split_dataset yet.
enum class Split { labeled, unlabeled_1, unlabeled_2, unlabeled_3, test, unassigned };

inline constexpr std::array<Split, 5> kAssignedSplits = {
    Split::labeled, Split::unlabeled_1, Split::unlabeled_2, Split::unlabeled_3, Split::test};

inline constexpr std::array<Split, 3> kUnlabeledSplits = {Split::unlabeled_1, Split::unlabeled_2,
                                                          Split::unlabeled_3};

inline std::string_view to_string(Label l) { return l == Label::tb ? "tb" : "normal"; }

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::labeled: return "labeled";
    case Split::unlabeled_1: return "unlabeled_1";
    case Split::unlabeled_2: return "unlabeled_2";
    case Split::unlabeled_3: return "unlabeled_3";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Label parse_label(std::string_view s) {
  if (s == "tb") return Label::tb;
  if (s == "normal") return Label::normal;
  invalid("unknown label '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  for (Split v : {Split::labeled, Split::unlabeled_1, Split::unlabeled_2, Split::unlabeled_3,
                  Split::test, Split::unassigned}) {
    if (to_string(v) == s) return v;
  }
  invalid("unknown split '" + std::string(s) + "'");
}

/// Unlabeled subset number (1..3) for an unlabeled split, 0 otherwise.
inline int unlabeled_index(Split s) {
  switch (s) {
    case Split::unlabeled_1: return 1;
    case Split::unlabeled_2: return 2;
    case Split::unlabeled_3: return 3;
    default: return 0;
  }
}

struct ImageSample {
  std::string id;
  Image pixels;
  Label label = Label::normal;
  Split split = Split::unassigned;
  std::optional<Mask> lesion_mask;

  /// Checks the documented invariants; throws ValidationError on violation.
  void validate() const {
    require(pixels.size() > 0, "sample " + id + ": empty image");
    require((pixels >= 0.0f).all() && (pixels <= 1.0f).all(),
            "sample " + id + ": pixel values outside [0,1]");
    if (lesion_mask) {
      require(dims_of(*lesion_mask) == dims_of(pixels),
              "sample " + id + ": lesion mask dimensions differ from image");
      if (label == Label::normal) {
        require(count_foreground(*lesion_mask) == 0,
                "sample " + id + ": normal sample with lesion pixels");
      }
    }
  }
};

struct LungMask {
  Mask bits;
  Dims source_dims;

  static LungMask from_bits(Mask bits) {
    LungMask m{std::move(bits), {}};
    m.source_dims = dims_of(m.bits);
    return m;
  }
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  Label label = Label::normal;
  Split split = Split::unassigned;
  std::string provenance;
};

struct ClassTally {
  std::int64_t normal = 0;
  std::int64_t tb = 0;
  std::int64_t total() const { return normal + tb; }
  friend bool operator==(const ClassTally&, const ClassTally&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  ClassTally count(Split s) const {
    ClassTally t;
    for (const auto& e : entries) {
      if (e.split != s) continue;
      (e.label == Label::tb ? t.tb : t.normal) += 1;
    }
    return t;
  }

  std::vector<const ManifestEntry*> select(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
      if (e.split == s) out.push_back(&e);
    }
    return out;
  }
};

/// Geometry of one simulated lung field: an axis-aligned ellipse expressed as
/// fractions of the image side.
struct EllipseSpec {
  double center_row = 0.5;
  double center_col = 0.3;
  double radius_row = 0.32;
  double radius_col = 0.17;
};

struct SynthConfig {
  int n_normal = 200;
  int n_tb = 200;
  int image_size = 256;
  std::array<int, 2> lesion_count_range = {1, 3};
  std::array<double, 2> lesion_radius_range = {10.0, 20.0};
  /// Left and right lung fields.
  std::array<EllipseSpec, 2> lung_ellipses = {EllipseSpec{0.5, 0.29, 0.33, 0.17},
                                              EllipseSpec{0.5, 0.71, 0.33, 0.17}};
  /// Per-image random displacement of each ellipse, as a fraction of the side.
  double geometry_jitter = 0.03;
  double noise_level = 0.04;
  /// Brightness added at a lesion centre.
  double lesion_intensity = 0.35;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_normal >= 0 && n_tb >= 0, "n_normal/n_tb: counts must be non-negative");
    require(n_normal + n_tb > 0, "n_normal/n_tb: corpus must not be empty");
    require(image_size >= 64, "image_size: must be at least 64");
    require(lesion_count_range[0] >= 1 && lesion_count_range[0] <= lesion_count_range[1],
            "lesion_count_range: must be a nonempty positive range");
    require(lesion_radius_range[0] > 0 && lesion_radius_range[0] <= lesion_radius_range[1],
            "lesion_radius_range: must be a nonempty positive range");
    require(noise_level >= 0, "noise_level: must be non-negative");
    require(lesion_intensity > 0, "lesion_intensity: must be positive");
    for (const auto& e : lung_ellipses) {
      require(e.radius_row > 0 && e.radius_col > 0, "lung_ellipse_params: radii must be positive");
      require(e.center_row > 0 && e.center_row < 1 && e.center_col > 0 && e.center_col < 1,
              "lung_ellipse_params: centres must lie inside the image");
    }
    require(geometry_jitter >= 0, "geometry_jitter: must be non-negative");
  }
};

}  // namespace screen::corpus
