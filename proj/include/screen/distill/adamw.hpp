#pragma once

#include <cmath>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/model/tensor.hpp"

namespace screen::distill {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. A non-positive limit disables clipping.
template <typename S>
double clip_grad_norm(model::ParamList<S>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) sq += p.param->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-6));
    for (auto& p : params) p.param->grad *= scale;
  }
  return norm;
}

/// Adam with decoupled weight decay. Decay skips parameters flagged as
/// non-decaying (biases, normalization gains).
template <typename S>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(model::ParamList<S>& params, double lr, double weight_decay) {
    if (m_.empty()) {
      for (auto& p : params) {
        m_.push_back(model::Matrix<S>::Zero(p.param->value.rows(), p.param->value.cols()));
        v_.push_back(model::Matrix<S>::Zero(p.param->value.rows(), p.param->value.cols()));
      }
    }
    require(m_.size() == params.size(), "optimizer state does not match parameters");
    ++t_;
    const S b1 = static_cast<S>(config_.beta1);
    const S b2 = static_cast<S>(config_.beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(config_.beta1, t_));
    const S c2 = static_cast<S>(1.0 - std::pow(config_.beta2, t_));
    const S eps = static_cast<S>(config_.epsilon);
    const S rate = static_cast<S>(lr);
    const S decay = static_cast<S>(lr * weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i].param;
      m_[i] = b1 * m_[i] + (1 - b1) * p.grad;
      v_[i] = b2 * v_[i] + (1 - b2) * p.grad.cwiseAbs2();
      if (p.decay) p.value -= decay * p.value;
      p.value.array() -= rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<model::Matrix<S>> m_, v_;
  long t_ = 0;
};

}  // namespace screen::distill
