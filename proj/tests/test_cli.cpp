#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <set>

#include "screen/cli/commands.hpp"
#include "screen/cli/config.hpp"
#include "support.hpp"

using namespace screen;
using namespace screen::cli;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

// Small enough to run the whole pipeline in seconds.
const char* kTinyConfig = R"(
[run]
seed = 3

[corpus]
n_normal = 12
n_tb = 12
image_size = 64
lesion_radius = 3, 5

[model]
patch_size = 4
embed_dim = 24
depth = 2
heads = 6
mlp_ratio = 2
input_side = 16
local_side = 8
dino_out_dim = 16
dino_hidden_dim = 16
bottleneck_dim = 8
cls_hidden_dim = 8

[train]
batch_size = 4
warmup_epochs = 2
epochs_per_stage = 1
correction_interval = 2
)";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SCREEN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

// ---- configuration -----------------------------------------------------------------------

TEST(Config, DeskConfigValidates) {
  auto cfg = load_config(fs::path(SCREEN_SOURCE_DIR) / "configs" / "desk.ini");
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train.encoder.embed_dim, 192);
  EXPECT_EQ(cfg.train.seed, 7u);
}

TEST(Config, FullConfigValidates) {
  auto cfg = load_config(fs::path(SCREEN_SOURCE_DIR) / "configs" / "full.ini");
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train.encoder, model::EncoderConfig::full());
  EXPECT_EQ(cfg.train.heads, model::HeadConfig::full());
}

TEST(Config, FullPresetSelectsFullArchitecture) {
  const auto cfg = parse_config("[run]\nseed = 1\n[model]\npreset = full\n");
  EXPECT_EQ(cfg.train.encoder.embed_dim, 384);
  EXPECT_EQ(cfg.train.encoder.depth, 12);
  EXPECT_EQ(cfg.train.encoder.heads, 6);
  EXPECT_EQ(cfg.train.encoder.input_side, 224);
  EXPECT_EQ(cfg.train.encoder.local_side, 96);
  EXPECT_EQ(cfg.train.heads.dino_out_dim, 4096);
  // Explicit keys override the preset wherever they appear.
  EXPECT_EQ(parse_config("[model]\ndepth = 3\npreset = full\n").train.encoder.depth, 3);
}

TEST(Config, RoundTripsThroughText) {
  auto cfg = parse_config(kTinyConfig);
  cfg.eval.theta = 0.35;
  cfg.train.augment.local.ops = views::OpSet::parse("crop,rotation");
  const std::string text = format_config(cfg);
  EXPECT_EQ(format_config(parse_config(text)), text);
  const auto back = parse_config(text);
  EXPECT_EQ(back.eval.theta, 0.35);
  EXPECT_EQ(back.train.encoder.heads, 6);
  EXPECT_EQ(back.synth.lesion_radius_range[1], 5.0);
  EXPECT_EQ(back.train.augment.local.ops.str(), cfg.train.augment.local.ops.str());
}

TEST(Config, UnknownKeysAndSectionsRejectedByName) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("[train]\nepochs_per_stgae = 3\n").find("train.epochs_per_stgae"), std::string::npos);
  EXPECT_NE(message("[trian]\nbatch_size = 3\n").find("[trian]"), std::string::npos);
  EXPECT_NE(message("[train]\nbatch_size = three\n").find("train.batch_size"), std::string::npos);
  EXPECT_NE(message("[model]\npreset = huge\n").find("model.preset"), std::string::npos);
}

TEST(Config, SeedRequired) {
  auto cfg = parse_config("[corpus]\nn_normal = 10\n");
  try {
    cfg.validate();
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
}

TEST(Config, SemanticChecksNameTheField) {
  auto cfg = parse_config(kTinyConfig);
  cfg.synth.lesion_radius_range = {5, 3};
  try {
    cfg.validate();
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("lesion_radius"), std::string::npos);
  }
}

// ---- pipeline commands ----------------------------------------------------------------------

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    cfg_ = new RunConfig(parse_config(kTinyConfig));
    cmd_synth(*cfg_, raw());
    cmd_preprocess(raw() / kManifestName, prep(), cfg_->quality, 1);
    train_ = new TrainSummary(cmd_train(*cfg_, prep() / kManifestName, run(), 3));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete cfg_;
    delete dir_;
  }

  static fs::path raw() { return dir_->path() / "raw"; }
  static fs::path prep() { return dir_->path() / "prep"; }
  static fs::path run() { return dir_->path() / "run"; }

  static TempDir* dir_;
  static RunConfig* cfg_;
  static TrainSummary* train_;
};

TempDir* Pipeline::dir_ = nullptr;
RunConfig* Pipeline::cfg_ = nullptr;
TrainSummary* Pipeline::train_ = nullptr;

TEST_F(Pipeline, SynthIsDeterministic) {
  TempDir other("synth_again");
  cmd_synth(*cfg_, other / "nested" / "raw");  // missing directories are created
  EXPECT_EQ(hash_file(other / "nested" / "raw" / kManifestName), hash_file(raw() / kManifestName));
  const auto m = corpus::read_manifest(raw() / kManifestName);
  EXPECT_EQ(m.entries.size(), 24u);
}

TEST_F(Pipeline, PreprocessKeepsEveryTwoLungImage) {
  EXPECT_EQ(read_file(prep() / "rejections.csv"), "id,reason\n");
  EXPECT_EQ(corpus::read_manifest(prep() / kManifestName).entries.size(), 24u);
}

TEST_F(Pipeline, PreprocessRejectsExactlyTheDamagedMasks) {
  TempDir work("damaged");
  // Copy the raw corpus and erase one lung from two masks.
  fs::copy(raw(), work / "raw", fs::copy_options::recursive);
  auto m = corpus::read_manifest(work / "raw" / kManifestName);
  std::set<std::string> damaged;
  for (std::size_t i : {3u, 17u}) {
    const auto path = *m.entries[i].mask_path;
    Mask bits = png::read_mask(path);
    bits.rightCols(bits.cols() / 2).setZero();
    png::write_mask(path, bits);
    damaged.insert(m.entries[i].id);
  }
  const auto summary = cmd_preprocess(work / "raw" / kManifestName, work / "prep", cfg_->quality, 1);

  // Independent recount: the gate over every aligned mask.
  std::set<std::string> expected;
  for (const auto& e : m.entries) {
    const Image img = png::read_gray(e.image_path);
    const auto mask = corpus::LungMask::from_bits(png::read_mask(*e.mask_path));
    const auto d = corpus::quality_gate(corpus::resize_mask_nearest(mask, dims_of(img)), cfg_->quality);
    if (d.verdict == corpus::Verdict::reject) expected.insert(e.id);
  }
  std::set<std::string> got;
  for (const auto& r : summary.rejections) {
    got.insert(r.id);
    EXPECT_EQ(r.reason, "single lung region");
  }
  EXPECT_EQ(got, damaged);
  EXPECT_EQ(got, expected);
  EXPECT_EQ(summary.manifest.entries.size(), 22u);
  EXPECT_EQ(lines_of(read_file(work / "prep" / "rejections.csv")).size(), 3u);
}

TEST_F(Pipeline, TrainWritesSevenCheckpoints) {
  ASSERT_EQ(train_->checkpoints.size(), 7u);
  for (const auto& p : train_->checkpoints) EXPECT_TRUE(fs::exists(p)) << p;
  for (int k = 1; k <= 3; ++k) {
    EXPECT_TRUE(fs::exists(run() / ("student_stage" + std::to_string(k) + ".ckpt")));
    EXPECT_TRUE(fs::exists(run() / ("teacher_stage" + std::to_string(k) + ".ckpt")));
    const auto meta = nlohmann::json::parse(read_file(run() / ("stage" + std::to_string(k) + ".json")));
    EXPECT_EQ(meta.at("subsets").size(), static_cast<std::size_t>(k));
  }
  EXPECT_TRUE(fs::exists(run() / "warmup_log.csv"));
  EXPECT_TRUE(fs::exists(run() / "config.ini"));
}

TEST_F(Pipeline, TrainResumesWithoutRetraining) {
  const auto before = hash_file(run() / "teacher_stage3.ckpt");
  const auto again = cmd_train(*cfg_, prep() / kManifestName, run(), 3);
  EXPECT_FALSE(again.warmup_run);
  EXPECT_TRUE(again.stages_run.empty());
  EXPECT_EQ(hash_file(run() / "teacher_stage3.ckpt"), before);
}

TEST_F(Pipeline, TrainResumesAfterLosingTheLastStage) {
  TempDir copy("resume");
  fs::copy(run(), copy / "run", fs::copy_options::recursive);
  fs::remove(copy / "run" / "teacher_stage3.ckpt");
  // A truncated checkpoint is not trusted either.
  const std::string bytes = read_file(copy / "run" / "student_stage3.ckpt");
  write_text(copy / "run" / "student_stage3.ckpt", bytes.substr(0, bytes.size() / 2));
  const auto s = cmd_train(*cfg_, prep() / kManifestName, copy / "run", 3);
  EXPECT_EQ(s.stages_run, std::vector<int>{3});
  EXPECT_FALSE(s.warmup_run);
  EXPECT_EQ(hash_file(copy / "run" / "teacher_stage3.ckpt"), hash_file(run() / "teacher_stage3.ckpt"));
}

TEST_F(Pipeline, WarmupOnlyRun) {
  TempDir other("warm_only");
  const auto s = cmd_train(*cfg_, prep() / kManifestName, other / "run", 0);
  EXPECT_EQ(s.checkpoints.size(), 1u);
  EXPECT_FALSE(fs::exists(other / "run" / "student_stage1.ckpt"));
  EXPECT_EQ(hash_file(other / "run" / "student_warmup.ckpt"), hash_file(run() / "student_warmup.ckpt"));
}

TEST_F(Pipeline, ChangedConfigurationRejected) {
  auto changed = *cfg_;
  changed.train.batch_size = 5;
  EXPECT_THROW(cmd_train(changed, prep() / kManifestName, run(), 3), ValidationError);
}

TEST_F(Pipeline, EvalReportMatchesTestSplit) {
  TempDir out("eval");
  const auto ev = cmd_eval(run() / "teacher_stage3.ckpt", prep() / kManifestName, out.path(), 0.5);
  const auto manifest = corpus::read_manifest(prep() / kManifestName);
  EXPECT_EQ(ev.report.confusion.total(), static_cast<std::int64_t>(manifest.select(corpus::Split::test).size()));
  EXPECT_EQ(evalx::parse_report(read_file(out / "report.csv")), ev.report);
  EXPECT_EQ(lines_of(read_file(out / "predictions.csv")).size(), ev.predictions.size() + 1);
}

TEST_F(Pipeline, ConstantPositiveStubHasFullRecall) {
  TempDir out("stub");
  auto net = model::load_network<float>(run() / "teacher_stage3.ckpt").network;
  for (auto& p : net.params()) {
    if (p.name == "cls_head.2.weight") p.param->value.setZero();
    if (p.name == "cls_head.2.bias") p.param->value.setConstant(10.0f);
  }
  model::save_network(out / "stub.ckpt", net, 3);
  const auto ev = cmd_eval(out / "stub.ckpt", prep() / kManifestName, out.path(), 0.5);
  EXPECT_EQ(ev.report.tb.recall.str(), "100.00");
  EXPECT_EQ(ev.report.confusion.fn + ev.report.confusion.tn, 0);
}

TEST_F(Pipeline, ExplainRendersRequestedIdsAndIsDeterministic) {
  TempDir a("explain_a"), b("explain_b");
  const auto manifest = corpus::read_manifest(prep() / kManifestName);
  std::vector<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (e.label == corpus::Label::tb && ids.size() < 2) ids.push_back(e.id);
  }
  const auto s = cmd_explain(run() / "teacher_stage3.ckpt", prep() / kManifestName, a.path(), 0.5, ids, 0);
  ASSERT_EQ(s.overlays.size(), 2u);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_EQ(s.overlays[i], a / evalx::overlay_name(ids[i], s.selection.best));
    EXPECT_TRUE(fs::exists(s.overlays[i]));
  }
  const auto rows = lines_of(read_file(a / "localization.csv"));
  ASSERT_GE(rows.size(), 7u);
  EXPECT_EQ(rows[0], "head,validation_iou,test_iou,selected");
  int selected = 0;
  for (int h = 1; h <= 6; ++h) selected += rows[h].back() == '1';
  EXPECT_EQ(selected, 1);
  EXPECT_EQ(s.selection.mean_iou.size(), 6u);

  cmd_explain(run() / "teacher_stage3.ckpt", prep() / kManifestName, b.path(), 0.5, ids, 0);
  EXPECT_EQ(hash_file(a / "localization.csv"), hash_file(b / "localization.csv"));
  for (const auto& id : ids) {
    const auto name = evalx::overlay_name(id, s.selection.best);
    EXPECT_EQ(hash_file(a / name), hash_file(b / name));
  }
  EXPECT_THROW(cmd_explain(run() / "teacher_stage3.ckpt", prep() / kManifestName, b.path(), 0.5, {"nope"}, 0),
               ValidationError);
}

TEST_F(Pipeline, CnnBaselineTrainsAndEvaluates) {
  TempDir out("cnn");
  const auto s = cmd_train(*cfg_, prep() / kManifestName, out / "run", 3, Arch::cnn);
  ASSERT_EQ(s.checkpoints.size(), 1u);
  const auto ev = cmd_eval(s.checkpoints[0], prep() / kManifestName, out / "eval", 0.5);
  EXPECT_GT(ev.report.confusion.total(), 0);
}

// ---- binary -------------------------------------------------------------------------------------

TEST(Binary, ExitCodes) {
  TempDir dir("binary");
  write_text(dir / "tiny.ini", kTinyConfig);
  write_text(dir / "typo.ini", "[train]\nbatch_sise = 4\n");
  write_text(dir / "bad_range.ini", std::string(kTinyConfig) + "\n[quality]\nmax_component_ratio = 0.5\n");

  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("synth --bogus"), 1);
  // No seed anywhere.
  EXPECT_EQ(run_cli("synth --out " + (dir / "a").string()), 1);
  EXPECT_EQ(run_cli("synth --config " + (dir / "typo.ini").string() + " --out " + (dir / "a").string()), 1);
  EXPECT_EQ(run_cli("synth --config " + (dir / "tiny.ini").string() + " --n-tb -3 --out " + (dir / "a").string()), 1);
  EXPECT_EQ(run_cli("train --config " + (dir / "bad_range.ini").string() + " --manifest x.csv --out " +
                    (dir / "t").string()),
            1);
  // Runtime failure: the checkpoint does not exist.
  EXPECT_EQ(run_cli("synth --config " + (dir / "tiny.ini").string() + " --out " + (dir / "a").string()), 0);
  EXPECT_EQ(run_cli("eval --manifest " + (dir / "a" / "manifest.csv").string() + " --checkpoint " +
                    (dir / "missing.ckpt").string() + " --out " + (dir / "e").string()),
            2);
}

TEST(Binary, SynthTwiceGivesIdenticalManifests) {
  TempDir dir("binary_synth");
  for (const char* name : {"x", "y"}) {
    ASSERT_EQ(run_cli("synth --seed 7 --n-normal 12 --n-tb 12 --out " + (dir / name).string()), 0);
  }
  EXPECT_EQ(hash_file(dir / "x" / "manifest.csv"), hash_file(dir / "y" / "manifest.csv"));
  ASSERT_EQ(run_cli("synth --seed 8 --n-normal 12 --n-tb 12 --out " + (dir / "z").string()), 0);
  EXPECT_NE(hash_file(dir / "x" / "manifest.csv"), hash_file(dir / "z" / "manifest.csv"));
}
