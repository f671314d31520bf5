#pragma once

#include <cmath>
#include <string>

#include "screen/model/layers.hpp"

namespace screen::model {

struct HeadConfig {
  /// Prototype count K of the self-distillation head.
  int dino_out_dim = 4096;
  int dino_hidden_dim = 2048;
  int bottleneck_dim = 256;
  int cls_hidden_dim = 256;

  static HeadConfig full() { return {}; }

  /// Narrower projection head to match the reduced encoder.
  static HeadConfig desk() {
    HeadConfig c;
    c.dino_out_dim = 1024;
    c.dino_hidden_dim = 1024;
    return c;
  }

  void validate() const {
    require(dino_out_dim > 0 && dino_hidden_dim > 0 && bottleneck_dim > 0 && cls_hidden_dim > 0,
            "head dimensions must be positive");
  }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Projection head for self-distillation:
/// Linear-BN-GELU, Linear-BN-GELU, Linear to the bottleneck, L2 normalization,
/// then a weight-normalized prototype layer (unit-norm rows, no bias).
template <typename S>
class DinoHead {
 public:
  struct Tape {
    Matrix<S> x, h1, a1, h2, a2, y, z;
    typename BatchNorm<S>::Cache bn1, bn2;
    Eigen::Matrix<S, Eigen::Dynamic, 1> y_norm;
  };

  DinoHead() = default;
  DinoHead(int in_dim, const HeadConfig& c)
      : fc1_(in_dim, c.dino_hidden_dim),
        bn1_(c.dino_hidden_dim),
        fc2_(c.dino_hidden_dim, c.dino_hidden_dim),
        bn2_(c.dino_hidden_dim),
        fc3_(c.dino_hidden_dim, c.bottleneck_dim),
        prototypes_(c.dino_out_dim, c.bottleneck_dim, true) {}

  void init(Rng& rng) {
    for (auto* l : {&fc1_, &fc2_, &fc3_}) trunc_normal(l->weight.value, rng, 0.02);
    trunc_normal(prototypes_.value, rng, 0.02);
  }

  Matrix<S> forward(const Matrix<S>& x, bool batch_stats, bool update_running, Tape* tape,
                    Matrix<S>* bottleneck_out = nullptr) {
    typename BatchNorm<S>::Cache c1, c2;
    Matrix<S> h1 = fc1_.forward(x);
    Matrix<S> n1 = bn1_.forward(h1, batch_stats, update_running, tape ? &c1 : nullptr);
    Matrix<S> a1 = gelu(n1);
    Matrix<S> h2 = fc2_.forward(a1);
    Matrix<S> n2 = bn2_.forward(h2, batch_stats, update_running, tape ? &c2 : nullptr);
    Matrix<S> a2 = gelu(n2);
    Matrix<S> y = fc3_.forward(a2);
    Eigen::Matrix<S, Eigen::Dynamic, 1> norms = y.rowwise().norm().cwiseMax(S(1e-12));
    Matrix<S> z = y.array().colwise() / norms.array();
    if (bottleneck_out) *bottleneck_out = z;
    const Matrix<S> w = normalized_prototypes();
    Matrix<S> scores(z.rows(), w.rows());
    scores.noalias() = z * w.transpose();
    if (tape) {
      tape->x = x;
      tape->h1 = n1;
      tape->a1 = std::move(a1);
      tape->h2 = n2;
      tape->a2 = std::move(a2);
      tape->y = std::move(y);
      tape->z = std::move(z);
      tape->bn1 = std::move(c1);
      tape->bn2 = std::move(c2);
      tape->y_norm = std::move(norms);
    }
    return scores;
  }

  /// Returns dL/dx.
  Matrix<S> backward(Tape& t, const Matrix<S>& d_scores) {
    const Eigen::Matrix<S, Eigen::Dynamic, 1> vnorm = prototypes_.value.rowwise().norm();
    const Matrix<S> w = prototypes_.value.array().colwise() / vnorm.array();
    // Weight normalization: dV = (dW - W * <W, dW>) / |V| per prototype row.
    Matrix<S> dw(w.rows(), w.cols());
    dw.noalias() = d_scores.transpose() * t.z;
    const Eigen::Matrix<S, Eigen::Dynamic, 1> proj = (dw.array() * w.array()).rowwise().sum();
    prototypes_.grad.array() +=
        (dw.array() - w.array().colwise() * proj.array()).colwise() / vnorm.array();

    Matrix<S> dz(d_scores.rows(), w.cols());
    dz.noalias() = d_scores * w;
    // L2 normalization: dy = (dz - z * <z, dz>) / |y|.
    const Eigen::Matrix<S, Eigen::Dynamic, 1> zdz = (dz.array() * t.z.array()).rowwise().sum();
    Matrix<S> dy = (dz.array() - t.z.array().colwise() * zdz.array()).colwise() / t.y_norm.array();

    Matrix<S> da2 = fc3_.backward(t.a2, dy);
    Matrix<S> dn2 = gelu_backward(t.h2, da2);
    Matrix<S> dh2 = bn2_.backward(t.bn2, dn2);
    Matrix<S> da1 = fc2_.backward(t.a1, dh2);
    Matrix<S> dn1 = gelu_backward(t.h1, da1);
    Matrix<S> dh1 = bn1_.backward(t.bn1, dn1);
    return fc1_.backward(t.x, dh1);
  }

  Matrix<S> normalized_prototypes() const {
    const Eigen::Matrix<S, Eigen::Dynamic, 1> vnorm = prototypes_.value.rowwise().norm();
    return prototypes_.value.array().colwise() / vnorm.array();
  }

  int out_dim() const { return static_cast<int>(prototypes_.value.rows()); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    fc1_.collect(prefix + ".mlp.0", out);
    bn1_.collect(prefix + ".mlp.1", out);
    fc2_.collect(prefix + ".mlp.3", out);
    bn2_.collect(prefix + ".mlp.4", out);
    fc3_.collect(prefix + ".mlp.6", out);
    out.push_back({prefix + ".last_layer.weight_v", &prototypes_});
  }

  void collect_buffers(const std::string& prefix, BufferList<S>& out) {
    bn1_.collect_buffers(prefix + ".mlp.1", out);
    bn2_.collect_buffers(prefix + ".mlp.4", out);
  }

  Linear<S>& fc1() { return fc1_; }
  Linear<S>& fc2() { return fc2_; }
  Linear<S>& fc3() { return fc3_; }
  BatchNorm<S>& bn1() { return bn1_; }
  BatchNorm<S>& bn2() { return bn2_; }
  Param<S>& prototypes() { return prototypes_; }

 private:
  Linear<S> fc1_;
  BatchNorm<S> bn1_;
  Linear<S> fc2_;
  BatchNorm<S> bn2_;
  Linear<S> fc3_;
  Param<S> prototypes_;
};

/// Binary classifier head: Linear-ReLU-Linear to one logit.
template <typename S>
class ClsHead {
 public:
  struct Tape {
    Matrix<S> x, h;
  };

  ClsHead() = default;
  ClsHead(int in_dim, const HeadConfig& c) : fc1_(in_dim, c.cls_hidden_dim), fc2_(c.cls_hidden_dim, 1) {}

  void init(Rng& rng) {
    trunc_normal(fc1_.weight.value, rng, 0.02);
    trunc_normal(fc2_.weight.value, rng, 0.02);
  }

  /// Logits as a column (rows x 1).
  Matrix<S> forward(const Matrix<S>& x, Tape* tape) const {
    Matrix<S> h = fc1_.forward(x);
    Matrix<S> out = fc2_.forward(relu(h));
    if (tape) {
      tape->x = x;
      tape->h = std::move(h);
    }
    return out;
  }

  Matrix<S> backward(Tape& t, const Matrix<S>& d_logits) {
    Matrix<S> da = fc2_.backward(relu(t.h), d_logits);
    return fc1_.backward(t.x, relu_backward(t.h, da));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    fc1_.collect(prefix + ".0", out);
    fc2_.collect(prefix + ".2", out);
  }

  Linear<S>& fc1() { return fc1_; }
  Linear<S>& fc2() { return fc2_; }

 private:
  Linear<S> fc1_;
  Linear<S> fc2_;
};

}  // namespace screen::model
