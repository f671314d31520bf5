#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "screen/cli/config.hpp"
#include "screen/core/atomic_file.hpp"
#include "screen/core/parallel.hpp"
#include "screen/core/png_io.hpp"
#include "screen/corpus/manifest.hpp"
#include "screen/corpus/preprocess.hpp"
#include "screen/corpus/split.hpp"
#include "screen/corpus/synth.hpp"
#include "screen/distill/trainer.hpp"
#include "screen/evalx/attention.hpp"
#include "screen/evalx/evaluate.hpp"
#include "screen/evalx/overlay.hpp"
#include "screen/model/checkpoint.hpp"

namespace screen::cli {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.csv";

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Generates the synthetic corpus under `out`, assigns splits with the run
/// seed and writes `out/manifest.csv`.
inline corpus::DatasetManifest cmd_synth(const RunConfig& cfg, const fs::path& out) {
  cfg.require_seed();
  cfg.synth.validate();
  fs::create_directories(out);
  auto manifest = corpus::generate_synthetic_corpus(cfg.synth, out, cfg.workers);
  manifest = corpus::split_dataset(std::move(manifest), cfg.require_seed());
  corpus::write_manifest(out / kManifestName, manifest);
  return manifest;
}

/// Re-assigns splits of an existing manifest; paths are rewritten relative to
/// the new manifest's directory.
inline corpus::DatasetManifest cmd_split(const fs::path& manifest_path, std::uint64_t seed, const fs::path& out) {
  auto manifest = corpus::split_dataset(corpus::read_manifest(manifest_path), seed);
  fs::create_directories(out);
  corpus::write_manifest(out / kManifestName, manifest);
  return manifest;
}

struct Rejection {
  std::string id;
  std::string reason;
};

struct PreprocessSummary {
  corpus::DatasetManifest manifest;
  std::vector<Rejection> rejections;
};

inline std::string format_rejections(const std::vector<Rejection>& rows) {
  std::string out = "id,reason\n";
  for (const auto& r : rows) out += corpus::detail::csv_field(r.id) + "," + corpus::detail::csv_field(r.reason) + "\n";
  return out;
}

/// Lung-mask driven cropping of every manifest row. Quality-gate rejections
/// and unreadable rows go to `rejections.csv`; the run fails only when no row
/// survives.
inline PreprocessSummary cmd_preprocess(const fs::path& manifest_path, const fs::path& out,
                                        const corpus::QualityConfig& quality, int workers) {
  const auto source = corpus::read_manifest(manifest_path);
  if (source.entries.empty()) invalid("manifest has no rows: " + manifest_path.string());
  for (const char* sub : {"images", "masks", "lesions"}) fs::create_directories(out / sub);

  const std::size_t n = source.entries.size();
  std::vector<std::optional<corpus::ManifestEntry>> kept(n);
  std::vector<std::optional<Rejection>> rejected(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& e = source.entries[i];
    try {
      if (!e.mask_path) invalid("no lung mask");
      const Image image = png::read_gray(e.image_path);
      const auto mask = corpus::LungMask::from_bits(png::read_mask(*e.mask_path));
      std::optional<Mask> lesion;
      const auto lesion_path = corpus::lesion_path_for(e.image_path);
      if (fs::exists(lesion_path)) lesion = png::read_mask(lesion_path);

      const auto aligned = corpus::resize_mask_nearest(mask, dims_of(image));
      const auto decision = corpus::quality_gate(aligned, quality);
      if (decision.verdict == corpus::Verdict::reject) {
        rejected[i] = Rejection{e.id, decision.reason};
        return;
      }
      const auto p = corpus::preprocess_sample(image, mask, lesion, quality);
      const std::string name = e.id + ".png";
      png::write_gray(out / "images" / name, p.image);
      png::write_mask(out / "masks" / name, p.lungs.bits);
      if (p.lesion) png::write_mask(out / "lesions" / name, *p.lesion);
      auto entry = e;
      entry.image_path = out / "images" / name;
      entry.mask_path = out / "masks" / name;
      kept[i] = std::move(entry);
    } catch (const std::exception& ex) {
      rejected[i] = Rejection{e.id, std::string("error: ") + ex.what()};
    }
  });

  PreprocessSummary summary;
  summary.manifest.seed = source.seed;
  for (std::size_t i = 0; i < n; ++i) {
    if (kept[i]) summary.manifest.entries.push_back(std::move(*kept[i]));
    if (rejected[i]) summary.rejections.push_back(std::move(*rejected[i]));
  }
  write_file_atomic(out / "rejections.csv", format_rejections(summary.rejections));
  if (summary.manifest.entries.empty()) fail("every manifest row was rejected; see " + (out / "rejections.csv").string());
  corpus::write_manifest(out / kManifestName, summary.manifest);
  return summary;
}

/// Loads all rows of one split, in manifest order.
inline std::vector<corpus::ImageSample> load_split(const corpus::DatasetManifest& m, corpus::Split split,
                                                   int workers) {
  const auto rows = m.select(split);
  std::vector<corpus::ImageSample> out(rows.size());
  parallel_for(rows.size(), workers, [&](std::size_t i) { out[i] = corpus::load_sample(*rows[i]); });
  return out;
}

enum class Arch { vit, cnn };

struct TrainSummary {
  std::vector<fs::path> checkpoints;  // written or reused, in pipeline order
  std::vector<int> stages_run;        // stages trained in this invocation
  bool warmup_run = false;
};

/// Supervised warmup followed by `stages` DISTL stages. Completed steps are
/// detected by their checkpoints and skipped, so an interrupted run resumes at
/// the last stage boundary.
inline TrainSummary cmd_train(const RunConfig& cfg, const fs::path& manifest_path, const fs::path& out,
                              int stages, Arch arch = Arch::vit) {
  cfg.validate();
  if (stages < 0 || stages > cfg.train.stages) invalid("--stages must lie in 0.." + std::to_string(cfg.train.stages));
  const auto manifest = corpus::read_manifest(manifest_path);
  fs::create_directories(out);

  const std::string config_text = format_config(cfg);
  const auto config_path = out / "config.ini";
  if (fs::exists(config_path) && read_file(config_path) != config_text) {
    invalid("run directory " + out.string() + " was created with a different configuration");
  }
  write_file_atomic(config_path, config_text);

  const auto labeled = load_split(manifest, corpus::Split::labeled, cfg.workers);
  if (labeled.empty()) invalid("manifest has no labeled rows");
  TrainSummary summary;

  if (arch == Arch::cnn) {
    const auto path = out / "cnn_baseline.ckpt";
    auto r = distill::train_cnn_baseline(labeled, cfg.train);
    model::save_cnn(path, r.net);
    write_file_atomic(out / "cnn_log.csv", distill::format_epoch_log(r.log));
    summary.checkpoints.push_back(path);
    return summary;
  }

  const auto warm = distill::warmup_checkpoint_path(out);
  auto usable = [](const fs::path& p) {
    if (!fs::exists(p)) return false;
    try {
      model::read_archive(p);
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  if (!usable(warm)) {
    auto r = distill::train_supervised_warmup(labeled, cfg.train);
    model::save_network(warm, r.student, 0);
    write_file_atomic(out / "warmup_log.csv", distill::format_epoch_log(r.log));
    summary.warmup_run = true;
  }
  summary.checkpoints.push_back(warm);
  if (stages == 0) return summary;

  std::vector<std::vector<corpus::ImageSample>> unlabeled;
  for (auto split : corpus::kUnlabeledSplits) unlabeled.push_back(load_split(manifest, split, cfg.workers));

  for (int k = 1; k <= stages; ++k) {
    const auto s = distill::checkpoint_path(out, model::Role::student, k);
    const auto t = distill::checkpoint_path(out, model::Role::teacher, k);
    if (!(usable(s) && usable(t))) {
      const auto r = distill::run_distl_stage(k, out, labeled, unlabeled, cfg.train);
      nlohmann::json meta = {{"stage", k}, {"iterations", r.log.size()}, {"corrections", r.corrections.size()}};
      std::size_t samples = 0;
      for (auto split : r.subsets) {
        meta["subsets"].push_back(std::string(corpus::to_string(split)));
        samples += unlabeled[corpus::unlabeled_index(split) - 1].size();
      }
      meta["unlabeled_samples"] = samples;
      write_file_atomic(out / ("stage" + std::to_string(k) + ".json"), meta.dump(2) + "\n");
      summary.stages_run.push_back(k);
    }
    summary.checkpoints.push_back(s);
    summary.checkpoints.push_back(t);
  }
  return summary;
}

inline std::string format_predictions(const std::vector<evalx::Prediction>& preds) {
  std::string out = "id,label,probability,predicted\n";
  for (const auto& p : preds) {
    out += corpus::detail::csv_field(p.id) + "," + std::string(corpus::to_string(p.truth)) + "," +
           fixed(p.probability, 9) + "," + std::string(corpus::to_string(p.predicted)) + "\n";
  }
  return out;
}

/// Evaluates a transformer or baseline-CNN checkpoint on the test split and
/// writes `report.csv` and `predictions.csv` into `out`.
inline evalx::Evaluation cmd_eval(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out,
                                  double threshold, int workers = 1) {
  const auto manifest = corpus::read_manifest(manifest_path);
  const auto test = load_split(manifest, corpus::Split::test, workers);
  if (test.empty()) invalid("manifest has no test rows");
  const auto archive = model::read_archive(checkpoint);
  evalx::Evaluation ev;
  if (archive.meta.at("arch") == "cnn") {
    auto net = model::load_cnn<float>(checkpoint);
    ev = evalx::evaluate(net, test, threshold);
  } else {
    auto net = model::load_network<float>(checkpoint).network;
    ev = evalx::evaluate(net, test, threshold);
  }
  fs::create_directories(out);
  write_file_atomic(out / "report.csv", evalx::format_report(ev.report));
  write_file_atomic(out / "predictions.csv", format_predictions(ev.predictions));
  return ev;
}

struct ExplainSummary {
  evalx::HeadSelection selection;       // on the validation slice
  std::vector<double> test_iou;         // per head, tb test samples
  int test_samples = 0;
  double uniform_all_ones_iou = 0;      // attention spread evenly: every patch selected
  double uniform_flagged_iou = 0;       // constant map flagged to zeros: nothing selected
  std::vector<fs::path> overlays;
};

/// Per-head attention maps of one sample at the model's input size.
template <typename S>
std::vector<evalx::AttentionMap> maps_for(model::Network<S>& net, const corpus::ImageSample& s) {
  return evalx::extract_attention(net, views::prepare_input(s.pixels, net.encoder_config().input_side));
}

/// Chooses the best attention head on labeled tb samples (the validation
/// slice), scores every head on tb test samples, and renders the best head's
/// overlay for the requested ids (default: the first `count` tb test ids).
inline ExplainSummary cmd_explain(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out,
                                  double theta, std::vector<std::string> ids, int count, int workers = 1) {
  if (!(theta >= 0 && theta <= 1)) invalid("theta must lie in [0,1]");
  const auto manifest = corpus::read_manifest(manifest_path);
  auto net = model::load_network<float>(checkpoint).network;

  auto with_truth = [&](corpus::Split split) {
    std::vector<corpus::ImageSample> kept;
    for (auto& s : load_split(manifest, split, workers)) {
      if (s.label == corpus::Label::tb && s.lesion_mask && count_foreground(*s.lesion_mask) > 0) {
        kept.push_back(std::move(s));
      }
    }
    return kept;
  };
  const auto validation = with_truth(corpus::Split::labeled);
  const auto test = with_truth(corpus::Split::test);

  auto collect = [&](const std::vector<corpus::ImageSample>& samples) {
    std::pair<std::vector<std::vector<evalx::AttentionMap>>, std::vector<std::optional<Mask>>> r;
    for (const auto& s : samples) {
      r.first.push_back(maps_for(net, s));
      r.second.push_back(s.lesion_mask);
    }
    return r;
  };

  ExplainSummary summary;
  {
    const auto [maps, truths] = collect(validation);
    summary.selection = evalx::select_best_head(maps, truths, theta);
  }
  const int grid = net.encoder_config().grid();
  if (!test.empty()) {
    const auto [maps, truths] = collect(test);
    const auto scored = evalx::select_best_head(maps, truths, theta);
    summary.test_iou = scored.mean_iou;
    summary.test_samples = scored.samples;
    const Mask ones = Mask::Ones(grid, grid);
    const Mask zeros = Mask::Zero(grid, grid);
    for (const auto& t : truths) {
      summary.uniform_all_ones_iou += evalx::localization_score(ones, *t);
      summary.uniform_flagged_iou += evalx::localization_score(zeros, *t);
    }
    summary.uniform_all_ones_iou /= static_cast<double>(truths.size());
    summary.uniform_flagged_iou /= static_cast<double>(truths.size());
  }

  if (ids.empty()) {
    std::vector<std::string> pool;
    for (const auto& s : test) pool.push_back(s.id);
    std::sort(pool.begin(), pool.end());
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(count, 0))));
    ids = pool;
  }
  fs::create_directories(out);
  const int best = summary.selection.best;
  for (const auto& id : ids) {
    auto it = std::find_if(manifest.entries.begin(), manifest.entries.end(),
                           [&](const corpus::ManifestEntry& e) { return e.id == id; });
    if (it == manifest.entries.end()) invalid("unknown sample id '" + id + "'");
    const auto sample = corpus::load_sample(*it);
    const auto maps = maps_for(net, sample);
    const auto path = out / evalx::overlay_name(id, best);
    evalx::render_overlay(sample.pixels, maps[best], path);
    summary.overlays.push_back(path);
  }

  std::ostringstream csv;
  csv << "head,validation_iou,test_iou,selected\n";
  for (std::size_t h = 0; h < summary.selection.mean_iou.size(); ++h) {
    csv << h << ',' << fixed(summary.selection.mean_iou[h]) << ','
        << (summary.test_iou.empty() ? std::string("undefined") : fixed(summary.test_iou[h])) << ','
        << (static_cast<int>(h) == best ? 1 : 0) << '\n';
  }
  csv << "\nstatistic,value\n"
      << "best_head," << best << '\n'
      << "theta," << fixed(theta) << '\n'
      << "validation_samples," << summary.selection.samples << '\n'
      << "test_samples," << summary.test_samples << '\n'
      << "test_iou_best," << (summary.test_iou.empty() ? std::string("undefined") : fixed(summary.test_iou[best]))
      << '\n'
      << "uniform_all_ones_iou," << fixed(summary.uniform_all_ones_iou) << '\n'
      << "uniform_flagged_iou," << fixed(summary.uniform_flagged_iou) << '\n';
  write_file_atomic(out / "localization.csv", csv.str());
  return summary;
}

}  // namespace screen::cli
