#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/corpus/lung_mask.hpp"
#include "screen/corpus/types.hpp"
#include "screen/distill/trainer.hpp"

namespace screen::cli {

struct EvalConfig {
  double threshold = 0.5;
  double theta = 0.5;
  /// Checkpoint (file stem inside the run directory) used for evaluation.
  std::string checkpoint = "teacher_stage3";
  /// Test samples rendered by `explain` when no ids are requested.
  int explain_count = 8;
};

/// Everything a pipeline run needs, loadable from one INI file.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  int workers = 1;
  std::optional<std::filesystem::path> manifest;  // real-data manifest instead of the synthetic corpus
  corpus::SynthConfig synth;
  corpus::QualityConfig quality;
  distill::TrainConfig train;
  EvalConfig eval;

  std::uint64_t require_seed() const {
    if (!seed) invalid("run.seed: a seed is required (config or --seed)");
    return *seed;
  }

  /// Pushes the run-level seed and worker count into the sub-configs.
  void propagate() {
    if (seed) {
      synth.seed = *seed;
      train.seed = *seed;
    }
    train.workers = workers;
  }

  void validate() const {
    require_seed();
    if (workers < 1) invalid("run.workers: must be >= 1");
    if (manifest && !std::filesystem::exists(*manifest)) {
      invalid("corpus.manifest: file not found: " + manifest->string());
    }
    synth.validate();
    if (!(quality.min_area_ratio >= 0 && quality.min_area_ratio <= quality.max_area_ratio &&
          quality.max_area_ratio <= 1)) {
      invalid("quality: area ratio bounds must satisfy 0 <= min <= max <= 1");
    }
    if (!(quality.max_component_ratio >= 1)) invalid("quality.max_component_ratio: must be >= 1");
    train.validate();
    if (!(eval.threshold >= 0 && eval.threshold <= 1)) invalid("eval.threshold: must lie in [0,1]");
    if (!(eval.theta >= 0 && eval.theta <= 1)) invalid("eval.theta: must lie in [0,1]");
    if (eval.explain_count < 0) invalid("eval.explain_count: must be non-negative");
    if (eval.checkpoint.empty()) invalid("eval.checkpoint: must not be empty");
  }
};

namespace detail {

inline std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  return s;
}

inline std::vector<std::string> items(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
  return out;
}

template <typename T>
T number(const std::string& text, const std::string& where) {
  T v{};
  const std::string t = trim(text);
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc() || ptr != end || t.empty()) invalid(where + ": expected a number, got '" + text + "'");
  return v;
}

template <typename T>
std::string show(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T, std::size_t N>
std::array<T, N> numbers(const std::string& text, const std::string& where) {
  const auto parts = items(text);
  if (parts.size() != N) invalid(where + ": expected " + std::to_string(N) + " comma-separated values");
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = number<T>(parts[i], where);
  return out;
}

template <typename T, std::size_t N>
std::string show(const std::array<T, N>& a) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) out += (i ? ", " : "") + show(a[i]);
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Field scalar(std::string section, std::string key, T& ref) {
  const std::string where = section + "." + key;
  return {section, key, [&ref, where](const std::string& v) { ref = number<T>(v, where); },
          [&ref] { return show(ref); }};
}

template <typename T>
Field pair(std::string section, std::string key, T& lo, T& hi) {
  const std::string where = section + "." + key;
  return {section, key,
          [&lo, &hi, where](const std::string& v) {
            const auto a = numbers<T, 2>(v, where);
            lo = a[0];
            hi = a[1];
          },
          [&lo, &hi] { return show(std::array<T, 2>{lo, hi}); }};
}

inline Field ellipse(std::string key, corpus::EllipseSpec& e) {
  const std::string where = "corpus." + key;
  return {"corpus", key,
          [&e, where](const std::string& v) {
            const auto a = numbers<double, 4>(v, where);
            e = {a[0], a[1], a[2], a[3]};
          },
          [&e] { return show(std::array<double, 4>{e.center_row, e.center_col, e.radius_row, e.radius_col}); }};
}

inline void add_tier(std::vector<Field>& f, const std::string& name, views::TierPolicy& t) {
  const std::string s = "augment";
  f.push_back({s, name + "_ops", [&t](const std::string& v) { t.ops = views::OpSet::parse(v); },
               [&t] { return t.ops.str(); }});
  f.push_back(pair(s, name + "_crop_scale", t.crop_scale_min, t.crop_scale_max));
  f.push_back(pair(s, name + "_aspect", t.aspect_min, t.aspect_max));
  f.push_back(scalar(s, name + "_rotation_limit", t.rotation_limit_deg));
  f.push_back(scalar(s, name + "_jitter_strength", t.jitter_strength));
  f.push_back(scalar(s, name + "_jitter_prob", t.jitter_prob));
  f.push_back(pair(s, name + "_blur_sigma", t.blur_sigma_min, t.blur_sigma_max));
  f.push_back(scalar(s, name + "_blur_prob", t.blur_prob));
  f.push_back(scalar(s, name + "_auto_contrast_prob", t.auto_contrast_prob));
  f.push_back(scalar(s, name + "_equalize_prob", t.equalize_prob));
}

/// The full key table; `preset` in [model] is handled separately.
inline std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"run", "seed", [&c](const std::string& v) {
                 if (trim(v).empty()) {
                   c.seed.reset();
                 } else {
                   c.seed = number<std::uint64_t>(v, "run.seed");
                 }
               },
               [&c] { return c.seed ? show(*c.seed) : std::string(); }});
  f.push_back({"run", "out", [&c](const std::string& v) { c.out = trim(v); }, [&c] { return c.out.string(); }});
  f.push_back(scalar("run", "workers", c.workers));

  auto& s = c.synth;
  f.push_back({"corpus", "manifest",
               [&c](const std::string& v) {
                 const auto t = trim(v);
                 if (t.empty()) {
                   c.manifest.reset();
                 } else {
                   c.manifest = t;
                 }
               },
               [&c] { return c.manifest ? c.manifest->string() : std::string(); }});
  f.push_back(scalar("corpus", "n_normal", s.n_normal));
  f.push_back(scalar("corpus", "n_tb", s.n_tb));
  f.push_back(scalar("corpus", "image_size", s.image_size));
  f.push_back(pair("corpus", "lesion_count", s.lesion_count_range[0], s.lesion_count_range[1]));
  f.push_back(pair("corpus", "lesion_radius", s.lesion_radius_range[0], s.lesion_radius_range[1]));
  f.push_back(scalar("corpus", "noise_level", s.noise_level));
  f.push_back(scalar("corpus", "lesion_intensity", s.lesion_intensity));
  f.push_back(scalar("corpus", "geometry_jitter", s.geometry_jitter));
  f.push_back(ellipse("left_lung", s.lung_ellipses[0]));
  f.push_back(ellipse("right_lung", s.lung_ellipses[1]));

  f.push_back(scalar("quality", "min_area_ratio", c.quality.min_area_ratio));
  f.push_back(scalar("quality", "max_area_ratio", c.quality.max_area_ratio));
  f.push_back(scalar("quality", "max_component_ratio", c.quality.max_component_ratio));

  auto& e = c.train.encoder;
  auto& h = c.train.heads;
  f.push_back(scalar("model", "patch_size", e.patch_size));
  f.push_back(scalar("model", "embed_dim", e.embed_dim));
  f.push_back(scalar("model", "depth", e.depth));
  f.push_back(scalar("model", "heads", e.heads));
  f.push_back(scalar("model", "mlp_ratio", e.mlp_ratio));
  f.push_back(scalar("model", "norm_epsilon", e.norm_epsilon));
  f.push_back(scalar("model", "drop_path_rate", e.drop_path_rate));
  f.push_back(scalar("model", "input_side", e.input_side));
  f.push_back(scalar("model", "local_side", e.local_side));
  f.push_back(scalar("model", "dino_out_dim", h.dino_out_dim));
  f.push_back(scalar("model", "dino_hidden_dim", h.dino_hidden_dim));
  f.push_back(scalar("model", "bottleneck_dim", h.bottleneck_dim));
  f.push_back(scalar("model", "cls_hidden_dim", h.cls_hidden_dim));

  auto& t = c.train;
  f.push_back(scalar("train", "batch_size", t.batch_size));
  f.push_back(scalar("train", "warmup_epochs", t.warmup_epochs));
  f.push_back(scalar("train", "epochs_per_stage", t.epochs_per_stage));
  f.push_back(scalar("train", "stages", t.stages));
  f.push_back(pair("train", "lr", t.lr_start, t.lr_end));
  f.push_back(pair("train", "weight_decay", t.wd_start, t.wd_end));
  f.push_back(pair("train", "ema_momentum", t.ema_start, t.ema_end));
  f.push_back(scalar("train", "w_dino", t.weights.dino));
  f.push_back(scalar("train", "w_cls", t.weights.cls));
  f.push_back(scalar("train", "correction_interval", t.correction_interval));
  f.push_back(pair("train", "teacher_temp", t.teacher_temp_start, t.teacher_temp_end));
  f.push_back(scalar("train", "teacher_temp_warmup_fraction", t.teacher_temp_warmup_fraction));
  f.push_back(scalar("train", "student_temp", t.student_temp));
  f.push_back(scalar("train", "center_momentum", t.center_momentum));
  f.push_back(scalar("train", "grad_clip", t.grad_clip));
  f.push_back(pair("train", "adam_betas", t.adamw.beta1, t.adamw.beta2));
  f.push_back(scalar("train", "adam_epsilon", t.adamw.epsilon));

  add_tier(f, "labeled", t.augment.labeled);
  add_tier(f, "global_1", t.augment.global_1);
  add_tier(f, "global_2", t.augment.global_2);
  add_tier(f, "local", t.augment.local);

  f.push_back(scalar("eval", "threshold", c.eval.threshold));
  f.push_back(scalar("eval", "theta", c.eval.theta));
  f.push_back({"eval", "checkpoint", [&c](const std::string& v) { c.eval.checkpoint = trim(v); },
               [&c] { return c.eval.checkpoint; }});
  f.push_back(scalar("eval", "explain_count", c.eval.explain_count));
  return f;
}

}  // namespace detail

/// Parses INI text. Unknown sections and keys are rejected by name.
/// `[model] preset = desk|full` resets the architecture before other keys
/// apply, wherever it appears in the section.
inline RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    invalid(std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig c;
  if (auto model = tree.get_child_optional("model")) {
    if (auto preset = model->get_optional<std::string>("preset")) {
      const auto p = detail::trim(*preset);
      if (p == "desk") {
        c.train.encoder = model::EncoderConfig::desk();
        c.train.heads = model::HeadConfig::desk();
      } else if (p == "full") {
        c.train.encoder = model::EncoderConfig::full();
        c.train.heads = model::HeadConfig::full();
      } else {
        invalid("model.preset: expected 'desk' or 'full', got '" + p + "'");
      }
    }
  }
  auto table = detail::fields(c);
  for (const auto& [section, body] : tree) {
    if (body.empty()) invalid("config: key '" + section + "' must sit inside a section");
    bool known_section = false;
    for (const auto& f : table) known_section |= f.section == section;
    if (!known_section) invalid("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (section == "model" && key == "preset") continue;
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const detail::Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) invalid("config: unknown key '" + section + "." + key + "'");
      it->set(value.data());
    }
  }
  c.propagate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) invalid("config file not found: " + path.string());
  return parse_config(read_file(path));
}

/// Canonical INI text with every key spelled out; parse_config(format_config(c))
/// reproduces c.
inline std::string format_config(const RunConfig& config) {
  RunConfig c = config;
  std::string out;
  std::string section;
  for (const auto& f : detail::fields(c)) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace screen::cli
