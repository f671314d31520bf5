#pragma once

#include <span>
#include <string>
#include <vector>

#include "screen/core/grid.hpp"
#include "screen/model/layers.hpp"

namespace screen::model {

struct CnnConfig {
  int input_side = 224;
  int conv1_filters = 16;
  int conv2_filters = 32;
  int kernel = 3;
  double input_mean = 0.5;
  double input_std = 0.25;

  int pooled_side() const { return input_side / 4; }

  void validate() const {
    require(input_side > 0 && input_side % 4 == 0, "cnn input_side must be a positive multiple of 4");
    require(conv1_filters > 0 && conv2_filters > 0, "cnn filter counts must be positive");
    require(kernel > 0 && kernel % 2 == 1, "cnn kernel must be a positive odd size");
  }
  friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

/// Vanilla baseline: conv-ReLU-pool, conv-ReLU-pool, fully connected logit.
/// Feature maps are (pixels x channels), pixels in raster order; convolutions
/// use zero "same" padding and 2x2 max pooling.
template <typename S>
class BaselineCnn {
 public:
  struct Tape {
    struct Stage {
      int side = 0;
      Matrix<S> cols;   // im2col
      Matrix<S> pre;    // conv output before ReLU
      std::vector<int> argmax;  // pooled index -> source pixel
    };
    std::vector<Stage> stages;
    Matrix<S> flat;
  };

  BaselineCnn() = default;
  explicit BaselineCnn(const CnnConfig& c)
      : config_(c),
        conv1_(c.kernel * c.kernel, c.conv1_filters),
        conv2_(c.kernel * c.kernel * c.conv1_filters, c.conv2_filters),
        fc_(c.pooled_side() * c.pooled_side() * c.conv2_filters, 1) {
    c.validate();
  }

  const CnnConfig& config() const { return config_; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "cnn-init"));
    for (auto* l : {&conv1_, &conv2_, &fc_}) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l->in_features()));
      uniform_fill(l->weight.value, rng, bound);
      uniform_fill(l->bias.value, rng, bound);
    }
  }

  /// Logit for one image.
  S forward(const Image& image, Tape* tape) const {
    require(image.rows() == config_.input_side && image.cols() == config_.input_side,
            "cnn input must be " + std::to_string(config_.input_side) + " square");
    const int n = config_.input_side;
    Matrix<S> x(static_cast<Eigen::Index>(n) * n, 1);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        x(r * n + c, 0) = (S(image(r, c)) - S(config_.input_mean)) / S(config_.input_std);
      }
    }
    if (tape) tape->stages.assign(2, {});
    x = stage(x, n, conv1_, tape ? &tape->stages[0] : nullptr);
    x = stage(x, n / 2, conv2_, tape ? &tape->stages[1] : nullptr);
    Matrix<S> flat = Eigen::Map<const Matrix<S>>(x.data(), 1, x.size());
    const S logit = fc_.forward(flat)(0, 0);
    if (tape) tape->flat = std::move(flat);
    return logit;
  }

  void backward(Tape& tape, S d_logit) {
    Matrix<S> d(1, 1);
    d(0, 0) = d_logit;
    Matrix<S> dflat = fc_.backward(tape.flat, d);
    const int ps = config_.pooled_side();
    Matrix<S> dx = Eigen::Map<Matrix<S>>(dflat.data(), static_cast<Eigen::Index>(ps) * ps,
                                         config_.conv2_filters);
    dx = stage_backward(tape.stages[1], dx, conv2_, config_.conv1_filters);
    stage_backward(tape.stages[0], dx, conv1_, 1);
  }

  ParamList<S> params() {
    ParamList<S> out;
    conv1_.collect("cnn.conv1", out);
    conv2_.collect("cnn.conv2", out);
    fc_.collect("cnn.fc", out);
    return out;
  }

  BufferList<S> buffers() { return {}; }

  void zero_grad() {
    for (auto& p : params()) p.param->zero_grad();
  }

  Linear<S>& conv1() { return conv1_; }
  Linear<S>& conv2() { return conv2_; }
  Linear<S>& fc() { return fc_; }

 private:
  Matrix<S> im2col(const Matrix<S>& x, int side) const {
    const int k = config_.kernel;
    const int half = k / 2;
    const int ch = static_cast<int>(x.cols());
    Matrix<S> cols = Matrix<S>::Zero(static_cast<Eigen::Index>(side) * side, k * k * ch);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        for (int i = 0; i < k; ++i) {
          const int rr = r + i - half;
          if (rr < 0 || rr >= side) continue;
          for (int j = 0; j < k; ++j) {
            const int cc = c + j - half;
            if (cc < 0 || cc >= side) continue;
            cols.block(r * side + c, (i * k + j) * ch, 1, ch) = x.row(rr * side + cc);
          }
        }
      }
    }
    return cols;
  }

  Matrix<S> col2im(const Matrix<S>& dcols, int side, int ch) const {
    const int k = config_.kernel;
    const int half = k / 2;
    Matrix<S> dx = Matrix<S>::Zero(static_cast<Eigen::Index>(side) * side, ch);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        for (int i = 0; i < k; ++i) {
          const int rr = r + i - half;
          if (rr < 0 || rr >= side) continue;
          for (int j = 0; j < k; ++j) {
            const int cc = c + j - half;
            if (cc < 0 || cc >= side) continue;
            dx.row(rr * side + cc) += dcols.block(r * side + c, (i * k + j) * ch, 1, ch);
          }
        }
      }
    }
    return dx;
  }

  Matrix<S> stage(const Matrix<S>& x, int side, const Linear<S>& conv,
                  typename Tape::Stage* st) const {
    Matrix<S> cols = im2col(x, side);
    Matrix<S> pre = conv.forward(cols);
    const Matrix<S> act = relu(pre);
    const int half = side / 2;
    Matrix<S> pooled(static_cast<Eigen::Index>(half) * half, act.cols());
    std::vector<int> argmax(static_cast<std::size_t>(pooled.size()));
    for (int r = 0; r < half; ++r) {
      for (int c = 0; c < half; ++c) {
        for (Eigen::Index f = 0; f < act.cols(); ++f) {
          int best = (2 * r) * side + 2 * c;
          for (int dr = 0; dr < 2; ++dr) {
            for (int dc = 0; dc < 2; ++dc) {
              const int idx = (2 * r + dr) * side + 2 * c + dc;
              if (act(idx, f) > act(best, f)) best = idx;
            }
          }
          pooled(r * half + c, f) = act(best, f);
          argmax[static_cast<std::size_t>((r * half + c) * act.cols() + f)] = best;
        }
      }
    }
    if (st) {
      st->side = side;
      st->cols = std::move(cols);
      st->pre = std::move(pre);
      st->argmax = std::move(argmax);
    }
    return pooled;
  }

  Matrix<S> stage_backward(const typename Tape::Stage& st, const Matrix<S>& dpooled,
                           Linear<S>& conv, int in_channels) {
    Matrix<S> dact = Matrix<S>::Zero(st.pre.rows(), st.pre.cols());
    for (Eigen::Index p = 0; p < dpooled.rows(); ++p) {
      for (Eigen::Index f = 0; f < dpooled.cols(); ++f) {
        dact(st.argmax[static_cast<std::size_t>(p * dpooled.cols() + f)], f) += dpooled(p, f);
      }
    }
    const Matrix<S> dpre = relu_backward(st.pre, dact);
    const Matrix<S> dcols = conv.backward(st.cols, dpre);
    return col2im(dcols, st.side, in_channels);
  }

  CnnConfig config_;
  Linear<S> conv1_;
  Linear<S> conv2_;
  Linear<S> fc_;
};

}  // namespace screen::model
