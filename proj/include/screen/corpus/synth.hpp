#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "screen/core/parallel.hpp"
#include "screen/core/png_io.hpp"
#include "screen/core/rng.hpp"
#include "screen/corpus/manifest.hpp"
#include "screen/corpus/types.hpp"

namespace screen::corpus {

struct SyntheticSample {
  ImageSample sample;
  LungMask lungs;
};

inline std::string synthetic_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn_%05d", index);
  return buf;
}

namespace detail {

struct Ellipse {
  double cr, cc, rr, rc;  // pixels

  double level(double r, double c) const {
    const double dr = (r - cr) / rr;
    const double dc = (c - cc) / rc;
    return dr * dr + dc * dc;
  }
};

}  // namespace detail

/// Renders sample `index` of the corpus. Depends only on (config.seed, id), so
/// samples can be generated in any order or in parallel.
inline SyntheticSample synthesize_sample(const SynthConfig& config, int index) {
  const int n = config.image_size;
  const std::string id = synthetic_id(index);
  Rng rng(derive_seed(config.seed, "synth", id));
  const bool is_tb = index >= config.n_normal;

  std::array<detail::Ellipse, 2> lungs;
  for (int k = 0; k < 2; ++k) {
    const auto& spec = config.lung_ellipses[k];
    lungs[k] = {(spec.center_row + rng.uniform(-1, 1) * config.geometry_jitter) * n,
                (spec.center_col + rng.uniform(-1, 1) * config.geometry_jitter) * n,
                spec.radius_row * rng.uniform(0.95, 1.05) * n,
                spec.radius_col * rng.uniform(0.95, 1.05) * n};
  }
  const double background = rng.uniform(0.05, 0.15);
  const double lung_level = rng.uniform(0.42, 0.55);
  const double rib_period = rng.uniform(0.07, 0.10) * n;
  const double rib_phase = rng.uniform(0, 2 * std::numbers::pi);

  Image img(n, n);
  Mask lung_bits = Mask::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double v = background + 0.05 * static_cast<double>(r) / n;
      for (const auto& e : lungs) {
        const double l = e.level(r + 0.5, c + 0.5);
        if (l <= 1.0) {
          lung_bits(r, c) = 1;
          // Soft shoulder near the boundary plus faint horizontal rib texture.
          const double shoulder = std::min(1.0, (1.0 - l) * 6.0);
          v = background + (lung_level - background) * shoulder +
              0.03 * std::sin(2 * std::numbers::pi * r / rib_period + rib_phase);
        }
      }
      img(r, c) = static_cast<float>(v);
    }
  }

  Mask lesion = Mask::Zero(n, n);
  if (is_tb) {
    const auto count = rng.integer(config.lesion_count_range[0], config.lesion_count_range[1]);
    for (std::int64_t k = 0; k < count; ++k) {
      const auto& e = lungs[rng.integer(0, 1)];
      const double radius = rng.uniform(config.lesion_radius_range[0], config.lesion_radius_range[1]);
      // Centre drawn uniformly from the ellipse shrunk by the lesion radius.
      const double fr = std::max(0.0, e.rr - radius);
      const double fc = std::max(0.0, e.rc - radius);
      const double rho = std::sqrt(rng.uniform());
      const double phi = rng.uniform(0, 2 * std::numbers::pi);
      const double lr = e.cr + fr * rho * std::sin(phi);
      const double lc = e.cc + fc * rho * std::cos(phi);
      const int r0 = std::max(0, static_cast<int>(std::floor(lr - radius)));
      const int r1 = std::min(n - 1, static_cast<int>(std::ceil(lr + radius)));
      const int c0 = std::max(0, static_cast<int>(std::floor(lc - radius)));
      const int c1 = std::min(n - 1, static_cast<int>(std::ceil(lc + radius)));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double d = std::hypot(r + 0.5 - lr, c + 0.5 - lc) / radius;
          if (d > 1.0 || !lung_bits(r, c)) continue;
          const double profile = d <= 0.6 ? 1.0 : (1.0 - d) / 0.4;
          img(r, c) += static_cast<float>(config.lesion_intensity * profile);
          lesion(r, c) = 1;
        }
      }
    }
  }

  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      img(r, c) = std::clamp(img(r, c) + static_cast<float>(rng.normal() * config.noise_level),
                             0.0f, 1.0f);
    }
  }

  SyntheticSample out;
  out.sample.id = id;
  out.sample.pixels = std::move(img);
  out.sample.label = is_tb ? Label::tb : Label::normal;
  out.sample.lesion_mask = std::move(lesion);
  out.lungs = LungMask::from_bits(std::move(lung_bits));
  return out;
}

/// Writes images/, masks/ and lesions/ under `out_dir` and returns the
/// (unsplit) manifest. Normal samples come first, then tb samples.
inline DatasetManifest generate_synthetic_corpus(const SynthConfig& config,
                                                 const std::filesystem::path& out_dir,
                                                 int workers = num_workers()) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "lesions");

  const int total = config.n_normal + config.n_tb;
  DatasetManifest manifest;
  manifest.seed = config.seed;
  manifest.entries.resize(total);
  parallel_for(static_cast<std::size_t>(total), workers, [&](std::size_t i) {
    const auto s = synthesize_sample(config, static_cast<int>(i));
    const auto name = s.sample.id + ".png";
    png::write_gray(out_dir / "images" / name, s.sample.pixels);
    png::write_mask(out_dir / "masks" / name, s.lungs.bits);
    png::write_mask(out_dir / "lesions" / name, *s.sample.lesion_mask);
    manifest.entries[i] = {s.sample.id, out_dir / "images" / name, out_dir / "masks" / name,
                           s.sample.label, Split::unassigned, "synthetic"};
  });
  return manifest;
}

}  // namespace screen::corpus
