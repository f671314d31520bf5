// Command-line front end for the screening pipeline.
//
//   screen synth      --seed 7 --out data/raw
//   screen preprocess --manifest data/raw/manifest.csv --out data/prep
//   screen train      --config configs/desk.ini --manifest data/prep/manifest.csv --out runs/desk
//   screen eval       --checkpoint runs/desk/teacher_stage3.ckpt --manifest data/prep/manifest.csv --out runs/desk/eval
//   screen explain    --checkpoint runs/desk/teacher_stage3.ckpt --manifest data/prep/manifest.csv --out runs/desk/explain
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "screen/screen.hpp"

namespace {

using namespace screen;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI run configuration");
  cmd->add_option("--seed", c.seed, "global seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
}

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig cfg = c.config.empty() ? cli::RunConfig{} : cli::load_config(c.config);
  if (c.seed) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (std::getenv("SCREEN_NUM_WORKERS")) cfg.workers = num_workers();
  cfg.propagate();
  return cfg;
}

fs::path output_dir(const cli::RunConfig& cfg) {
  if (cfg.out.empty()) invalid("an output directory is required (--out or run.out)");
  return cfg.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tuberculosis screening pipeline: synthetic corpus, DISTL training, evaluation, attention maps"};
  app.require_subcommand(1);

  Common synth_c, prep_c, split_c, train_c, eval_c, explain_c;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with planted lesions and split it");
  add_common(synth, synth_c);
  std::optional<int> n_normal, n_tb;
  synth->add_option("--n-normal", n_normal, "normal images");
  synth->add_option("--n-tb", n_tb, "tuberculosis images");

  auto* prep = app.add_subcommand("preprocess", "crop images to their lungs and apply the quality gate");
  add_common(prep, prep_c);
  std::string prep_manifest;
  prep->add_option("--manifest", prep_manifest, "input manifest")->required();

  auto* split = app.add_subcommand("split", "assign test/labeled/unlabeled splits");
  add_common(split, split_c);
  std::string split_manifest;
  split->add_option("--manifest", split_manifest, "input manifest")->required();

  auto* train = app.add_subcommand("train", "supervised warmup and DISTL stages");
  add_common(train, train_c);
  std::string train_manifest;
  int stages = 3;
  std::string arch = "vit";
  train->add_option("--manifest", train_manifest, "preprocessed manifest")->required();
  train->add_option("--stages", stages, "DISTL stages to run (0 = warmup only)")->check(CLI::Range(0, 3));
  train->add_option("--arch", arch, "vit or cnn (supervised baseline)")->check(CLI::IsMember({"vit", "cnn"}));

  auto* eval = app.add_subcommand("eval", "classification metrics on the test split");
  add_common(eval, eval_c);
  std::string eval_manifest, eval_ckpt;
  std::optional<double> threshold;
  eval->add_option("--manifest", eval_manifest, "manifest with a test split")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--threshold", threshold, "decision threshold on sigmoid(logit)");

  auto* explain = app.add_subcommand("explain", "attention heatmaps and localization scores");
  add_common(explain, explain_c);
  std::string explain_manifest, explain_ckpt;
  std::optional<double> theta;
  std::vector<std::string> ids;
  std::optional<int> count;
  explain->add_option("--manifest", explain_manifest, "manifest with lesion masks")->required();
  explain->add_option("--checkpoint", explain_ckpt, "transformer checkpoint")->required();
  explain->add_option("--theta", theta, "threshold on normalized attention");
  explain->add_option("--ids", ids, "sample ids to render")->delimiter(',');
  explain->add_option("--count", count, "tb test samples to render when --ids is absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      auto cfg = resolve(synth_c);
      if (n_normal) cfg.synth.n_normal = *n_normal;
      if (n_tb) cfg.synth.n_tb = *n_tb;
      const auto m = cli::cmd_synth(cfg, output_dir(cfg));
      std::cout << "wrote " << m.entries.size() << " samples to " << output_dir(cfg).string() << "\n";
    } else if (*prep) {
      const auto cfg = resolve(prep_c);
      const auto s = cli::cmd_preprocess(prep_manifest, output_dir(cfg), cfg.quality, cfg.workers);
      std::cout << "kept " << s.manifest.entries.size() << ", rejected " << s.rejections.size() << "\n";
    } else if (*split) {
      const auto cfg = resolve(split_c);
      const auto m = cli::cmd_split(split_manifest, cfg.require_seed(), output_dir(cfg));
      std::cout << "split " << m.entries.size() << " samples\n";
    } else if (*train) {
      const auto cfg = resolve(train_c);
      const auto s = cli::cmd_train(cfg, train_manifest, output_dir(cfg), stages,
                                    arch == "cnn" ? cli::Arch::cnn : cli::Arch::vit);
      for (const auto& p : s.checkpoints) std::cout << p.string() << "\n";
    } else if (*eval) {
      const auto cfg = resolve(eval_c);
      const auto ev = cli::cmd_eval(eval_ckpt, eval_manifest, output_dir(cfg),
                                    threshold.value_or(cfg.eval.threshold), cfg.workers);
      std::cout << evalx::format_report(ev.report);
    } else if (*explain) {
      const auto cfg = resolve(explain_c);
      const auto s = cli::cmd_explain(explain_ckpt, explain_manifest, output_dir(cfg),
                                      theta.value_or(cfg.eval.theta), ids, count.value_or(cfg.eval.explain_count),
                                      cfg.workers);
      std::cout << "best head " << s.selection.best << ", " << s.overlays.size() << " overlays\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
