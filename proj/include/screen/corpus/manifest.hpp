#pragma once

#include <boost/tokenizer.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "screen/core/atomic_file.hpp"
#include "screen/core/error.hpp"
#include "screen/core/png_io.hpp"
#include "screen/corpus/types.hpp"

namespace screen::corpus {

inline constexpr const char* kManifestHeader = "id,image_path,mask_path,label,split,provenance";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '\\';
    q += c;
  }
  return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  return {tok.begin(), tok.end()};
}

inline std::string relative_or_absolute(const std::filesystem::path& p,
                                        const std::filesystem::path& base) {
  namespace fs = std::filesystem;
  const auto abs = fs::weakly_canonical(fs::absolute(p));
  const auto root = fs::weakly_canonical(fs::absolute(base));
  auto rel = abs.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") return abs.generic_string();
  return rel.generic_string();
}

}  // namespace detail

/// Checks manifest invariants: unique ids, unique image paths, mask paths not
/// shared between rows.
inline void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  std::set<std::filesystem::path> paths;
  for (const auto& e : m.entries) {
    require(!e.id.empty(), "manifest row with empty id");
    require(ids.insert(e.id).second, "duplicate manifest id: " + e.id);
    require(paths.insert(e.image_path).second,
            "duplicate manifest path: " + e.image_path.string());
    if (e.mask_path) {
      require(paths.insert(*e.mask_path).second,
              "duplicate manifest path: " + e.mask_path->string());
    }
  }
}

/// Serializes the manifest. Paths are written relative to `base_dir` when they
/// live under it, which keeps manifests byte-identical across output roots.
inline std::string format_manifest(const DatasetManifest& m, const std::filesystem::path& base_dir) {
  std::ostringstream out;
  out << kManifestHeader << "\n";
  for (const auto& e : m.entries) {
    out << detail::csv_field(e.id) << ','
        << detail::csv_field(detail::relative_or_absolute(e.image_path, base_dir)) << ','
        << (e.mask_path ? detail::csv_field(detail::relative_or_absolute(*e.mask_path, base_dir))
                        : std::string())
        << ',' << to_string(e.label) << ',' << to_string(e.split) << ','
        << detail::csv_field(e.provenance) << "\n";
  }
  return out.str();
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  validate_manifest(m);
  write_file_atomic(path, format_manifest(m, path.parent_path()));
}

/// Parses a manifest file; relative paths resolve against the file's directory.
inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open manifest: " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  auto resolve = [&base](const std::string& s) {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : (base / p).lexically_normal();
  };

  DatasetManifest m;
  std::string line;
  if (!std::getline(in, line)) invalid("manifest is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) invalid("manifest header mismatch in " + path.string());
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 6) {
      invalid("manifest row " + std::to_string(row) + ": expected 6 fields, got " +
              std::to_string(f.size()));
    }
    ManifestEntry e;
    e.id = f[0];
    e.image_path = resolve(f[1]);
    if (!f[2].empty()) e.mask_path = resolve(f[2]);
    e.label = parse_label(f[3]);
    e.split = parse_split(f[4]);
    e.provenance = f[5];
    m.entries.push_back(std::move(e));
  }
  validate_manifest(m);
  return m;
}

/// Ground-truth lesion masks live in a `lesions/` directory next to the
/// image directory, under the image's file name.
inline std::filesystem::path lesion_path_for(const std::filesystem::path& image_path) {
  return image_path.parent_path().parent_path() / "lesions" / image_path.filename();
}

/// Loads one manifest row into memory, with its lesion mask when present.
inline ImageSample load_sample(const ManifestEntry& e) {
  ImageSample s;
  s.id = e.id;
  s.pixels = png::read_gray(e.image_path);
  s.label = e.label;
  s.split = e.split;
  const auto lesion = lesion_path_for(e.image_path);
  if (std::filesystem::exists(lesion)) {
    s.lesion_mask = png::read_mask(lesion);
  }
  s.validate();
  return s;
}

}  // namespace screen::corpus
