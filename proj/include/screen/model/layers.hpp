#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "screen/model/tensor.hpp"

namespace screen::model {

/// y = x W^T + b over row-stacked inputs.
template <typename S>
struct Linear {
  Param<S> weight;
  Param<S> bias;
  bool has_bias = true;

  Linear() = default;
  Linear(int in, int out, bool with_bias = true)
      : weight(out, in, true), bias(1, with_bias ? out : 0, false), has_bias(with_bias) {}

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Matrix<S> forward(const Matrix<S>& x) const {
    Matrix<S> y(x.rows(), weight.value.rows());
    y.noalias() = x * weight.value.transpose();
    if (has_bias) y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix<S> backward(const Matrix<S>& x, const Matrix<S>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    if (has_bias) bias.grad.row(0) += dy.colwise().sum();
    Matrix<S> dx(dy.rows(), weight.value.cols());
    dx.noalias() = dy * weight.value;
    return dx;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &weight});
    if (has_bias) out.push_back({prefix + ".bias", &bias});
  }
};

/// Row-wise layer normalization.
template <typename S>
struct LayerNorm {
  Param<S> gamma;
  Param<S> beta;
  S eps = S(1e-6);

  struct Cache {
    Matrix<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
  };

  LayerNorm() = default;
  LayerNorm(int dim, double epsilon) : gamma(1, dim, false), beta(1, dim, false), eps(S(epsilon)) {
    gamma.value.setOnes();
  }

  Matrix<S> forward(const Matrix<S>& x, Cache* cache) const {
    const auto n = x.cols();
    Matrix<S> xhat(x.rows(), n);
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S mu = x.row(r).mean();
      const S var = (x.row(r).array() - mu).square().sum() / S(n);
      rstd(r) = S(1) / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mu) * rstd(r);
    }
    Matrix<S> y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() +
                  beta.value.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  Matrix<S> backward(const Cache& c, const Matrix<S>& dy) {
    gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const S n = S(dy.cols());
    Matrix<S> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Matrix<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const S mean_d = dxhat.row(r).sum() / n;
      const S mean_dx = (dxhat.row(r).array() * c.xhat.row(r).array()).sum() / n;
      dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx);
    }
    return dx;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &gamma});
    out.push_back({prefix + ".bias", &beta});
  }
};

/// Batch normalization over rows (features in columns), with running
/// statistics for inference.
template <typename S>
struct BatchNorm {
  Param<S> gamma;
  Param<S> beta;
  Matrix<S> running_mean;
  Matrix<S> running_var;
  S eps = S(1e-5);
  S momentum = S(0.1);

  struct Cache {
    Matrix<S> xhat;
    RowVector<S> rstd;
    bool batch_stats = false;
  };

  BatchNorm() = default;
  explicit BatchNorm(int dim)
      : gamma(1, dim, false),
        beta(1, dim, false),
        running_mean(Matrix<S>::Zero(1, dim)),
        running_var(Matrix<S>::Ones(1, dim)) {
    gamma.value.setOnes();
  }

  Matrix<S> forward(const Matrix<S>& x, bool batch_stats, bool update_running, Cache* cache) {
    RowVector<S> mean;
    RowVector<S> var;
    if (batch_stats) {
      mean = x.colwise().mean();
      var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
      if (update_running) {
        const S n = S(x.rows());
        const RowVector<S> unbiased = n > 1 ? RowVector<S>(var * (n / (n - 1))) : var;
        running_mean = (S(1) - momentum) * running_mean + momentum * mean;
        running_var = (S(1) - momentum) * running_var + momentum * unbiased;
      }
    } else {
      mean = running_mean.row(0);
      var = running_var.row(0);
    }
    RowVector<S> rstd = (var.array() + eps).rsqrt().matrix();
    Matrix<S> xhat = (x.rowwise() - mean).array().rowwise() * rstd.array();
    Matrix<S> y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() +
                  beta.value.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
      cache->batch_stats = batch_stats;
    }
    return y;
  }

  Matrix<S> backward(const Cache& c, const Matrix<S>& dy) {
    gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    Matrix<S> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    if (!c.batch_stats) return dxhat.array().rowwise() * c.rstd.array();
    const S n = S(dy.rows());
    const RowVector<S> sum_d = dxhat.colwise().sum();
    const RowVector<S> sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum().matrix();
    Matrix<S> dx = dxhat * n;
    dx.rowwise() -= sum_d;
    dx.array() -= c.xhat.array().rowwise() * sum_dx.array();
    dx.array().rowwise() *= (c.rstd.array() / n);
    return dx;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &gamma});
    out.push_back({prefix + ".bias", &beta});
  }

  void collect_buffers(const std::string& prefix, BufferList<S>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }
};

/// Exact (erf) GELU.
template <typename S>
Matrix<S> gelu(const Matrix<S>& x) {
  return x.unaryExpr([](S v) { return S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>)); });
}

template <typename S>
Matrix<S> gelu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  const S inv_sqrt_2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
  Matrix<S> d = x.unaryExpr([inv_sqrt_2pi](S v) {
    const S cdf = S(0.5) * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
    return cdf + v * inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
  });
  return d.cwiseProduct(dy);
}

template <typename S>
Matrix<S> relu(const Matrix<S>& x) {
  return x.cwiseMax(S(0));
}

template <typename S>
Matrix<S> relu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  return (x.array() > S(0)).select(dy, S(0));
}

/// In-place numerically stable softmax over each row.
template <typename S>
void softmax_rows(Matrix<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace screen::model
