#pragma once

#include <cmath>
#include <string>

#include "screen/core/error.hpp"
#include "screen/model/tensor.hpp"

namespace screen::distill {

using model::Matrix;
using model::RowVector;

/// log(1 + e^x) without overflow for large |x|.
template <typename S>
S softplus(S x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename S>
S sigmoid(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

/// Binary cross-entropy on a logit: softplus(x) - t*x.
template <typename S>
S bce_logit_loss(S logit, S target) {
  if (!(target >= 0 && target <= 1)) invalid("bce target must lie in [0,1]");
  return softplus(logit) - target * logit;
}

template <typename S>
struct LossGrad {
  S loss = 0;
  Matrix<S> grad;  // d loss / d input, same shape as the input
};

/// Mean bce over a column of logits.
template <typename S>
LossGrad<S> bce_logit_batch(const Matrix<S>& logits, const Matrix<S>& targets) {
  require(logits.cols() == 1 && targets.cols() == 1 && logits.rows() == targets.rows(),
          "bce expects matching logit and target columns");
  require(logits.rows() > 0, "bce over an empty batch");
  const auto n = logits.rows();
  LossGrad<S> out;
  out.grad.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.loss += bce_logit_loss(logits(i, 0), targets(i, 0));
    out.grad(i, 0) = (sigmoid(logits(i, 0)) - targets(i, 0)) / static_cast<S>(n);
  }
  out.loss /= static_cast<S>(n);
  return out;
}

/// Row-wise softmax of scores / temperature.
template <typename S>
Matrix<S> softmax_tempered(const Matrix<S>& scores, S temperature) {
  Matrix<S> p = scores / temperature;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    p.row(r).array() -= p.row(r).maxCoeff();
    p.row(r) = p.row(r).array().exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Centering and temperatures for the self-distillation loss.
template <typename S>
struct DinoState {
  RowVector<S> center;
  S center_momentum = S(0.9);
  S teacher_temp = S(0.04);
  S student_temp = S(0.1);

  explicit DinoState(Eigen::Index k = 0) : center(RowVector<S>::Zero(k)) {}

  void validate() const {
    if (!(teacher_temp > 0 && student_temp > 0)) invalid("temperatures must be positive");
    if (!(center_momentum >= 0 && center_momentum <= 1)) invalid("center_momentum must lie in [0,1]");
    if (!center.allFinite()) fail("dino center is not finite");
  }
};

template <typename S>
struct DinoLossResult {
  S loss = 0;
  Matrix<S> d_student;
  RowVector<S> new_center;
};

/// Rows are view-major: with B images, teacher row v*B+b is global view v of
/// image b and student row u*B+b is view u (globals first, then locals).
/// The loss averages H(t_v, s_u) over images and ordered pairs with u != v.
/// The teacher side is a constant: no gradient flows into it.
template <typename S>
DinoLossResult<S> dino_loss(const Matrix<S>& student_scores, const Matrix<S>& teacher_scores,
                            const DinoState<S>& state, int n_global = 2) {
  state.validate();
  const Eigen::Index k = student_scores.cols();
  if (teacher_scores.cols() != k || state.center.size() != k) {
    invalid("dino_loss: mismatched score dimension K");
  }
  require(n_global > 0 && teacher_scores.rows() > 0 && teacher_scores.rows() % n_global == 0,
          "dino_loss: teacher rows must cover the global views");
  const Eigen::Index batch = teacher_scores.rows() / n_global;
  require(student_scores.rows() % batch == 0 && student_scores.rows() / batch > n_global - 1,
          "dino_loss: student rows must cover every view");
  const Eigen::Index n_views = student_scores.rows() / batch;

  Matrix<S> centered = teacher_scores.rowwise() - state.center;
  const Matrix<S> t = softmax_tempered<S>(centered, state.teacher_temp);
  const Matrix<S> s = softmax_tempered<S>(student_scores, state.student_temp);
  Matrix<S> log_s = student_scores / state.student_temp;
  for (Eigen::Index r = 0; r < log_s.rows(); ++r) {
    const S m = log_s.row(r).maxCoeff();
    const S lse = m + std::log((log_s.row(r).array() - m).exp().sum());
    log_s.row(r).array() -= lse;
  }

  DinoLossResult<S> out;
  out.d_student = Matrix<S>::Zero(student_scores.rows(), k);
  const S pairs = static_cast<S>(batch * n_global * (n_views - 1));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index v = 0; v < n_global; ++v) {
      const auto tv = t.row(v * batch + b);
      for (Eigen::Index u = 0; u < n_views; ++u) {
        if (u == v) continue;
        const Eigen::Index row = u * batch + b;
        out.loss -= tv.dot(log_s.row(row));
        out.d_student.row(row) += (s.row(row) - tv) / (state.student_temp * pairs);
      }
    }
  }
  out.loss /= pairs;
  const S m = state.center_momentum;
  out.new_center = m * state.center + (S(1) - m) * teacher_scores.colwise().mean();
  return out;
}

/// Soft pseudo-labels: each student view is pushed towards sigmoid of the
/// teacher logit of every other global view. Same row layout as dino_loss.
template <typename S>
LossGrad<S> pseudo_label_loss(const Matrix<S>& student_logits, const Matrix<S>& teacher_logits,
                              int n_global = 2) {
  require(student_logits.cols() == 1 && teacher_logits.cols() == 1, "logits must be a column");
  require(n_global > 0 && teacher_logits.rows() > 0 && teacher_logits.rows() % n_global == 0,
          "pseudo_label_loss: teacher rows must cover the global views");
  const Eigen::Index batch = teacher_logits.rows() / n_global;
  require(student_logits.rows() % batch == 0 && student_logits.rows() / batch > n_global - 1,
          "pseudo_label_loss: student rows must cover every view");
  const Eigen::Index n_views = student_logits.rows() / batch;

  LossGrad<S> out;
  out.grad = Matrix<S>::Zero(student_logits.rows(), 1);
  const S pairs = static_cast<S>(batch * n_global * (n_views - 1));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index v = 0; v < n_global; ++v) {
      const S target = sigmoid(teacher_logits(v * batch + b, 0));
      for (Eigen::Index u = 0; u < n_views; ++u) {
        if (u == v) continue;
        const S x = student_logits(u * batch + b, 0);
        out.loss += bce_logit_loss(x, target);
        out.grad(u * batch + b, 0) += (sigmoid(x) - target) / pairs;
      }
    }
  }
  out.loss /= pairs;
  return out;
}

struct LossWeights {
  double dino = 1.0;
  double cls = 1.0;

  void validate() const {
    if (!(dino >= 0 && cls >= 0)) invalid("loss weights must be non-negative");
    if (dino == 0 && cls == 0) invalid("loss weights must not both be zero");
  }
};

inline double combine_losses(double l_dino, double l_cls, const LossWeights& w) {
  w.validate();
  return w.dino * l_dino + w.cls * l_cls;
}

}  // namespace screen::distill
