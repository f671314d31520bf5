#pragma once

#include <array>
#include <filesystem>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "screen/core/atomic_file.hpp"
#include "screen/core/parallel.hpp"
#include "screen/corpus/types.hpp"
#include "screen/distill/adamw.hpp"
#include "screen/distill/ema.hpp"
#include "screen/distill/losses.hpp"
#include "screen/distill/schedule.hpp"
#include "screen/model/checkpoint.hpp"
#include "screen/model/cnn.hpp"
#include "screen/views/views.hpp"

namespace screen::distill {

using corpus::ImageSample;
using model::Network;
using model::Role;

struct TrainConfig {
  model::EncoderConfig encoder = model::EncoderConfig::desk();
  model::HeadConfig heads = model::HeadConfig::desk();
  views::AugmentPolicy augment = views::AugmentPolicy::defaults();

  int batch_size = 16;
  int warmup_epochs = 30;
  int epochs_per_stage = 10;
  int stages = 3;

  double lr_start = 5e-4;
  double lr_end = 1e-6;
  double wd_start = 0.04;
  double wd_end = 0.4;
  double ema_start = 0.996;
  double ema_end = 1.0;
  LossWeights weights;
  int correction_interval = 500;

  double teacher_temp_start = 0.01;
  double teacher_temp_end = 0.04;
  /// Share of each stage over which the teacher temperature ramps up.
  double teacher_temp_warmup_fraction = 0.3;
  double student_temp = 0.1;
  double center_momentum = 0.9;

  double grad_clip = 3.0;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  int workers = 1;

  views::ViewSides sides() const { return {encoder.input_side, encoder.local_side}; }

  void validate() const {
    encoder.validate();
    heads.validate();
    augment.validate();
    weights.validate();
    if (batch_size < 1) invalid("batch_size must be >= 1");
    if (warmup_epochs < 0 || epochs_per_stage < 0) invalid("epoch counts must be non-negative");
    if (stages != 3) invalid("stages must be 3");
    if (correction_interval < 1) invalid("correction_interval must be >= 1");
    if (!(lr_start >= 0 && lr_end >= 0)) invalid("learning rates must be non-negative");
    if (!(wd_start >= 0 && wd_end >= 0)) invalid("weight decay must be non-negative");
    if (!(ema_start >= 0 && ema_start <= 1 && ema_end >= 0 && ema_end <= 1)) {
      invalid("ema momentum must lie in [0,1]");
    }
    if (!(teacher_temp_start > 0 && teacher_temp_end > 0 && student_temp > 0)) {
      invalid("temperatures must be positive");
    }
    if (!(teacher_temp_warmup_fraction >= 0 && teacher_temp_warmup_fraction <= 1)) {
      invalid("teacher_temp_warmup_fraction must lie in [0,1]");
    }
    if (!(center_momentum >= 0 && center_momentum <= 1)) invalid("center_momentum must lie in [0,1]");
    if (workers < 1) invalid("workers must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double accuracy = 0;  // on the augmented training batches
};

struct IterationRecord {
  int stage = 0;
  long iter = 0;
  double l_dino = 0;
  double l_cls = 0;
  double lr = 0;
  double wd = 0;
  double ema_m = 0;
};

struct BatchRecord {
  int stage = 0;
  long iter = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
};

struct CorrectionRecord {
  int stage = 0;
  long iter = 0;
  double loss = 0;
};

/// Optional hooks into the stage loop, used by tests and diagnostics.
struct StageObserver {
  virtual ~StageObserver() = default;
  virtual void on_batch(const BatchRecord&) {}
  /// Around every optimizer step of the student (distillation and correction).
  virtual void before_student_step(Network<float>& /*teacher*/) {}
  virtual void after_student_step(Network<float>& /*teacher*/) {}
  /// Just before the teacher moves towards the student.
  virtual void before_ema(double /*m*/, Network<float>& /*teacher*/, Network<float>& /*student*/) {}
};

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  return order;
}

inline long batches_per_epoch(std::size_t n, int batch) {
  return static_cast<long>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

/// One supervised step on labeled images; returns the batch loss and the
/// number of correct predictions.
template <typename Net>
std::pair<double, int> supervised_step(Net& net, AdamW<float>& opt, std::span<const ImageSample* const> batch,
                                       std::uint64_t seed, const TrainConfig& cfg, double lr, double wd) {
  std::vector<Image> images(batch.size());
  parallel_for(batch.size(), cfg.workers, [&](std::size_t i) {
    images[i] = views::augment_labeled(batch[i]->pixels, derive_seed(seed, batch[i]->id), cfg.augment,
                                       cfg.encoder.input_side);
  });
  std::vector<const Image*> ptrs;
  model::Matrix<float> targets(static_cast<Eigen::Index>(batch.size()), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ptrs.push_back(&images[i]);
    targets(static_cast<Eigen::Index>(i), 0) = batch[i]->label == corpus::Label::tb ? 1.0f : 0.0f;
  }
  net.zero_grad();
  Rng drop(derive_seed(seed, "drop"));
  typename Net::Tape tape;
  auto out = net.forward(ptrs, model::Heads::cls, model::ForwardMode::student_training(), &drop, &tape);
  const auto bce = bce_logit_batch<float>(out.logits, targets);
  net.backward(tape, nullptr, &bce.grad);
  auto params = net.params();
  clip_grad_norm(params, cfg.grad_clip);
  opt.step(params, lr, wd);
  int correct = 0;
  for (Eigen::Index i = 0; i < targets.rows(); ++i) correct += (out.logits(i, 0) >= 0) == (targets(i, 0) > 0.5f);
  return {bce.loss, correct};
}

}  // namespace detail

struct WarmupResult {
  Network<float> student;
  std::vector<EpochRecord> log;
};

/// Supervised training of a freshly initialized student on labeled images.
inline WarmupResult train_supervised_warmup(std::span<const ImageSample> labeled, const TrainConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) invalid("supervised warmup needs a nonempty labeled split");
  WarmupResult result;
  result.student = Network<float>(cfg.encoder, cfg.heads, Role::student);
  result.student.init(derive_seed(cfg.seed, "student"));
  AdamW<float> opt(cfg.adamw);

  const long per_epoch = detail::batches_per_epoch(labeled.size(), cfg.batch_size);
  const long total = per_epoch * cfg.warmup_epochs;
  long t = 0;
  for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
    const auto order = detail::shuffled(labeled.size(), derive_seed(cfg.seed, "warmup", "order", epoch));
    double loss_sum = 0;
    int correct = 0;
    for (long b = 0; b < per_epoch; ++b, ++t) {
      std::vector<const ImageSample*> batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(order.size(), (b + 1) * std::size_t(cfg.batch_size)); ++i) {
        batch.push_back(&labeled[order[i]]);
      }
      const auto [loss, ok] = detail::supervised_step(
          result.student, opt, batch, derive_seed(cfg.seed, "warmup", t), cfg,
          scheduled(t, total, cfg.lr_start, cfg.lr_end), scheduled(t, total, cfg.wd_start, cfg.wd_end));
      if (!std::isfinite(loss)) fail("warmup loss diverged at iteration " + std::to_string(t));
      loss_sum += loss * static_cast<double>(batch.size());
      correct += ok;
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(labeled.size()),
                          static_cast<double>(correct) / static_cast<double>(labeled.size())});
  }
  return result;
}

struct StageResult {
  int stage = 0;
  Network<float> student;
  Network<float> teacher;
  model::RowVector<float> center;
  std::vector<IterationRecord> log;
  std::vector<BatchRecord> batches;
  std::vector<CorrectionRecord> corrections;
  /// Unlabeled subsets the stage drew from, in order.
  std::vector<corpus::Split> subsets;
};

/// One DISTL stage: distillation over the first `stage` unlabeled subsets with
/// an EMA teacher and periodic supervised correction of the student.
inline StageResult train_stage(int stage, Network<float> student, Network<float> teacher,
                               model::RowVector<float> center, std::span<const ImageSample> labeled,
                               std::span<const std::vector<ImageSample>> unlabeled, const TrainConfig& cfg,
                               StageObserver* observer = nullptr) {
  cfg.validate();
  if (stage < 1 || stage > cfg.stages) invalid("stage index must lie in 1.." + std::to_string(cfg.stages));
  if (static_cast<int>(unlabeled.size()) < stage) invalid("stage needs " + std::to_string(stage) + " unlabeled subsets");
  if (labeled.empty()) invalid("DISTL stages need a nonempty labeled split");
  require(model::same_shapes(student, teacher), "teacher and student shapes differ");
  student.set_role(Role::student);
  teacher.set_role(Role::teacher);
  if (center.size() != cfg.heads.dino_out_dim) center = model::RowVector<float>::Zero(cfg.heads.dino_out_dim);

  StageResult r;
  r.stage = stage;
  std::vector<const ImageSample*> pool;
  for (int k = 0; k < stage; ++k) {
    r.subsets.push_back(corpus::kUnlabeledSplits[k]);
    for (const auto& s : unlabeled[k]) pool.push_back(&s);
  }
  if (pool.empty()) invalid("no unlabeled samples for stage " + std::to_string(stage));

  AdamW<float> opt(cfg.adamw);
  const auto sides = cfg.sides();
  const bool use_dino = cfg.weights.dino > 0;
  const bool use_cls = cfg.weights.cls > 0;
  const auto heads = use_dino && use_cls ? model::Heads::both : use_dino ? model::Heads::dino : model::Heads::cls;
  const long per_epoch = detail::batches_per_epoch(pool.size(), cfg.batch_size);
  const long total = per_epoch * cfg.epochs_per_stage;
  const double temp_ramp = cfg.teacher_temp_warmup_fraction * static_cast<double>(total);

  std::vector<std::size_t> labeled_order;
  std::size_t labeled_pos = 0;
  int labeled_round = 0;

  DinoState<float> dino(cfg.heads.dino_out_dim);
  dino.center = center;
  dino.center_momentum = static_cast<float>(cfg.center_momentum);
  dino.student_temp = static_cast<float>(cfg.student_temp);

  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    const auto order = detail::shuffled(pool.size(), derive_seed(cfg.seed, "distl", "order", stage, epoch));
    for (long b = 0; b < per_epoch; ++b, ++t) {
      BatchRecord rec{stage, t, derive_seed(cfg.seed, "distl", stage, t), {}};
      std::vector<const ImageSample*> batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(order.size(), (b + 1) * std::size_t(cfg.batch_size)); ++i) {
        batch.push_back(pool[order[i]]);
        rec.ids.push_back(pool[order[i]]->id);
      }
      if (observer) observer->on_batch(rec);

      std::vector<views::ViewSet> vs(batch.size());
      parallel_for(batch.size(), cfg.workers, [&](std::size_t i) {
        vs[i] = views::make_views(batch[i]->pixels, derive_seed(rec.seed, batch[i]->id), cfg.augment, sides,
                                  batch[i]->id);
      });
      // View-major order: all first globals, all second globals, all locals.
      std::vector<const Image*> globals, all;
      for (const auto& v : vs) globals.push_back(&v.global_1);
      for (const auto& v : vs) globals.push_back(&v.global_2);
      all = globals;
      for (const auto& v : vs) all.push_back(&v.local_1);

      const double lr = scheduled(t, total, cfg.lr_start, cfg.lr_end);
      const double wd = scheduled(t, total, cfg.wd_start, cfg.wd_end);
      const double m = scheduled(t, total, cfg.ema_start, cfg.ema_end);
      dino.teacher_temp = static_cast<float>(linear_warmup(static_cast<double>(t), temp_ramp,
                                                           cfg.teacher_temp_start, cfg.teacher_temp_end));

      const auto t_out = teacher.forward(globals, heads, model::ForwardMode::teacher_training(), nullptr, nullptr);
      Rng drop(derive_seed(rec.seed, "drop"));
      Network<float>::Tape tape;
      const auto s_out = student.forward(all, heads, model::ForwardMode::student_training(), &drop, &tape);

      IterationRecord log{stage, t, 0, 0, lr, wd, m};
      model::Matrix<float> d_scores, d_logits;
      if (use_dino) {
        auto dl = dino_loss<float>(s_out.scores, t_out.scores, dino);
        log.l_dino = dl.loss;
        d_scores = dl.d_student * static_cast<float>(cfg.weights.dino);
        dino.center = dl.new_center;
      }
      if (use_cls) {
        auto pl = pseudo_label_loss<float>(s_out.logits, t_out.logits);
        log.l_cls = pl.loss;
        d_logits = pl.grad * static_cast<float>(cfg.weights.cls);
      }
      if (!std::isfinite(log.l_dino) || !std::isfinite(log.l_cls)) {
        fail("stage " + std::to_string(stage) + " loss diverged at iteration " + std::to_string(t));
      }

      if (observer) observer->before_student_step(teacher);
      student.zero_grad();
      student.backward(tape, use_dino ? &d_scores : nullptr, use_cls ? &d_logits : nullptr);
      auto params = student.params();
      clip_grad_norm(params, cfg.grad_clip);
      opt.step(params, lr, wd);
      if (observer) observer->after_student_step(teacher);

      if (observer) observer->before_ema(m, teacher, student);
      ema_update(teacher, student, m);
      r.log.push_back(log);
      r.batches.push_back(std::move(rec));

      if ((t + 1) % cfg.correction_interval == 0) {
        std::vector<const ImageSample*> sup;
        while (sup.size() < std::min<std::size_t>(cfg.batch_size, labeled.size())) {
          if (labeled_pos == labeled_order.size()) {
            labeled_order = detail::shuffled(labeled.size(),
                                             derive_seed(cfg.seed, "correction", "order", stage, labeled_round++));
            labeled_pos = 0;
          }
          sup.push_back(&labeled[labeled_order[labeled_pos++]]);
        }
        if (observer) observer->before_student_step(teacher);
        const double loss = detail::supervised_step(student, opt, sup,
                                                    derive_seed(cfg.seed, "correction", stage, t), cfg, lr, wd)
                                .first;
        if (observer) observer->after_student_step(teacher);
        r.corrections.push_back({stage, t, loss});
      }
    }
  }
  r.student = std::move(student);
  r.teacher = std::move(teacher);
  r.center = dino.center;
  return r;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Role role, int stage) {
  return dir / (std::string(model::to_string(role)) + "_stage" + std::to_string(stage) + ".ckpt");
}

inline std::filesystem::path warmup_checkpoint_path(const std::filesystem::path& dir) {
  return dir / "student_warmup.ckpt";
}

inline constexpr const char* kIterationLogHeader = "stage,iter,l_dino,l_cls,lr,wd,ema_m";

inline std::string format_iteration_log(const std::vector<IterationRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  out << kIterationLogHeader << '\n';
  for (const auto& r : log) {
    out << r.stage << ',' << r.iter << ',' << r.l_dino << ',' << r.l_cls << ',' << r.lr << ',' << r.wd << ','
        << r.ema_m << '\n';
  }
  return out.str();
}

/// Per-batch seeds and sample ids, enough to replay the stage's views.
inline std::string format_batch_log(const std::vector<BatchRecord>& batches) {
  std::ostringstream out;
  out << "stage,iter,seed,ids\n";
  for (const auto& b : batches) {
    out << b.stage << ',' << b.iter << ',' << b.seed << ',';
    for (std::size_t i = 0; i < b.ids.size(); ++i) out << (i ? ";" : "") << b.ids[i];
    out << '\n';
  }
  return out.str();
}

inline std::string format_epoch_log(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,loss,accuracy\n";
  for (const auto& r : log) out << r.epoch << ',' << r.loss << ',' << r.accuracy << '\n';
  return out.str();
}

inline std::string format_correction_log(const std::vector<CorrectionRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "stage,iter,loss\n";
  for (const auto& r : log) out << r.stage << ',' << r.iter << ',' << r.loss << '\n';
  return out.str();
}

inline constexpr const char* kCenterArray = "dino_center";

/// Checkpoint-driven stage: stage 1 starts teacher and student from the warmup
/// student; later stages continue each role from its own previous checkpoint.
/// Writes `{role}_stage{k}.ckpt` and the stage logs into `dir`.
inline StageResult run_distl_stage(int stage, const std::filesystem::path& dir,
                                   std::span<const ImageSample> labeled,
                                   std::span<const std::vector<ImageSample>> unlabeled, const TrainConfig& cfg,
                                   StageObserver* observer = nullptr) {
  auto need = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) fail("missing prior checkpoint " + p.string());
    return p;
  };
  Network<float> student, teacher;
  model::RowVector<float> center;
  if (stage == 1) {
    student = model::load_network<float>(need(warmup_checkpoint_path(dir))).network;
    teacher = student;
  } else {
    student = model::load_network<float>(need(checkpoint_path(dir, Role::student, stage - 1))).network;
    auto loaded = model::load_network<float>(need(checkpoint_path(dir, Role::teacher, stage - 1)));
    teacher = std::move(loaded.network);
    if (loaded.archive.contains(kCenterArray)) center = loaded.archive.at(kCenterArray).cast<float>();
  }
  if (student.encoder_config() != cfg.encoder || !(student.head_config() == cfg.heads)) {
    invalid("checkpoint architecture does not match the configured model");
  }
  auto r = train_stage(stage, std::move(student), std::move(teacher), std::move(center), labeled, unlabeled, cfg,
                       observer);
  model::save_network(checkpoint_path(dir, Role::student, stage), r.student, stage);
  model::save_network(checkpoint_path(dir, Role::teacher, stage), r.teacher, stage,
                      {{kCenterArray, r.center.cast<double>()}});
  const std::string k = std::to_string(stage);
  write_file_atomic(dir / ("train_log_stage" + k + ".csv"), format_iteration_log(r.log));
  write_file_atomic(dir / ("batches_stage" + k + ".csv"), format_batch_log(r.batches));
  write_file_atomic(dir / ("corrections_stage" + k + ".csv"), format_correction_log(r.corrections));
  return r;
}

struct CnnResult {
  model::BaselineCnn<float> net;
  std::vector<EpochRecord> log;
};

/// Small convolutional baseline trained on the labeled split alone, with the
/// same augmentation, optimizer and schedules as the warmup.
inline CnnResult train_cnn_baseline(std::span<const ImageSample> labeled, const TrainConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) invalid("baseline training needs a nonempty labeled split");
  model::CnnConfig cc;
  cc.input_side = cfg.encoder.input_side;
  CnnResult result{model::BaselineCnn<float>(cc), {}};
  result.net.init(derive_seed(cfg.seed, "cnn"));
  AdamW<float> opt(cfg.adamw);
  const long per_epoch = detail::batches_per_epoch(labeled.size(), cfg.batch_size);
  const long total = per_epoch * cfg.warmup_epochs;
  long t = 0;
  for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
    const auto order = detail::shuffled(labeled.size(), derive_seed(cfg.seed, "cnn", "order", epoch));
    double loss_sum = 0;
    int correct = 0;
    for (long b = 0; b < per_epoch; ++b, ++t) {
      const std::uint64_t seed = derive_seed(cfg.seed, "cnn", t);
      result.net.zero_grad();
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::size_t count = hi - lo;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& s = labeled[order[i]];
        const Image img = views::augment_labeled(s.pixels, derive_seed(seed, s.id), cfg.augment, cc.input_side);
        model::BaselineCnn<float>::Tape tape;
        const float logit = result.net.forward(img, &tape);
        const float target = s.label == corpus::Label::tb ? 1.0f : 0.0f;
        loss_sum += bce_logit_loss(logit, target);
        correct += (logit >= 0) == (target > 0.5f);
        result.net.backward(tape, (sigmoid(logit) - target) / static_cast<float>(count));
      }
      auto params = result.net.params();
      clip_grad_norm(params, cfg.grad_clip);
      opt.step(params, scheduled(t, total, cfg.lr_start, cfg.lr_end), scheduled(t, total, cfg.wd_start, cfg.wd_end));
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(labeled.size()),
                          static_cast<double>(correct) / static_cast<double>(labeled.size())});
  }
  return result;
}

}  // namespace screen::distill
