#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/core/rng.hpp"
#include "screen/corpus/types.hpp"

namespace screen::corpus {

/// Per-class split sizes by largest-remainder apportionment of the per-100
/// targets 10 (test), 9 (labeled) and 27 per unlabeled subset. Every size is
/// the floor or ceiling of its target; remainder ties favour the later splits,
/// so the unlabeled subsets never differ by more than one.
struct SplitSizes {
  std::int64_t test = 0;
  std::int64_t labeled = 0;
  std::array<std::int64_t, 3> unlabeled = {0, 0, 0};
};

inline SplitSizes split_sizes(std::int64_t n) {
  constexpr std::array<std::int64_t, 5> weights = {10, 9, 27, 27, 27};
  std::array<std::int64_t, 5> size{};
  std::array<std::int64_t, 5> rem{};
  std::int64_t left = n;
  for (std::size_t i = 0; i < 5; ++i) {
    size[i] = weights[i] * n / 100;
    rem[i] = weights[i] * n % 100;
    left -= size[i];
  }
  std::array<std::size_t, 5> order = {4, 3, 2, 1, 0};
  std::stable_sort(order.begin(), order.end(),
                   [&rem](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::int64_t k = 0; k < left; ++k) size[order[static_cast<std::size_t>(k)]] += 1;
  return {size[0], size[1], {size[2], size[3], size[4]}};
}

/// Stratified, seeded assignment of every entry to one of the five splits.
inline DatasetManifest split_dataset(DatasetManifest manifest, std::uint64_t seed) {
  for (Label label : {Label::normal, Label::tb}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].label == label) idx.push_back(i);
    }
    if (idx.size() < 10) {
      invalid("insufficient class count: " + std::string(to_string(label)) + " has " +
              std::to_string(idx.size()) + " samples, need at least 10");
    }
    Rng rng(derive_seed(seed, "split", to_string(label)));
    rng.shuffle(idx.begin(), idx.end());

    const auto sizes = split_sizes(static_cast<std::int64_t>(idx.size()));
    std::vector<std::pair<Split, std::int64_t>> plan = {
        {Split::test, sizes.test},
        {Split::labeled, sizes.labeled},
        {Split::unlabeled_1, sizes.unlabeled[0]},
        {Split::unlabeled_2, sizes.unlabeled[1]},
        {Split::unlabeled_3, sizes.unlabeled[2]}};
    std::size_t cursor = 0;
    for (const auto& [split, count] : plan) {
      for (std::int64_t k = 0; k < count; ++k) manifest.entries[idx[cursor++]].split = split;
    }
  }
  manifest.seed = seed;
  return manifest;
}

}  // namespace screen::corpus
