#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "screen/core/grid.hpp"
#include "screen/model/layers.hpp"

namespace screen::model {

struct EncoderConfig {
  int patch_size = 8;
  int embed_dim = 384;
  int depth = 12;
  int heads = 6;
  int mlp_ratio = 4;
  double norm_epsilon = 1e-6;
  /// Stochastic depth rate of the last block; earlier blocks scale linearly.
  double drop_path_rate = 0.1;
  int input_side = 224;
  int local_side = 96;
  /// Fixed input normalization applied to [0,1] pixels.
  double input_mean = 0.5;
  double input_std = 0.25;

  /// ViT-S/8.
  static EncoderConfig full() { return {}; }

  /// Reduced encoder for single-core CI runs.
  static EncoderConfig desk() {
    EncoderConfig c;
    c.depth = 4;
    c.embed_dim = 192;
    c.heads = 3;
    c.input_side = 64;
    c.local_side = 32;
    return c;
  }

  int grid() const { return input_side / patch_size; }
  int tokens() const { return grid() * grid() + 1; }

  void validate() const {
    require(patch_size > 0 && embed_dim > 0 && depth > 0 && heads > 0 && mlp_ratio > 0,
            "encoder dimensions must be positive");
    require(input_side % patch_size == 0, "input_side must be divisible by patch_size");
    require(local_side % patch_size == 0, "local_side must be divisible by patch_size");
    require(embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(drop_path_rate >= 0 && drop_path_rate < 1, "drop_path_rate must lie in [0,1)");
    require(norm_epsilon > 0, "norm_epsilon must be positive");
    require(input_std > 0, "input_std must be positive");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

enum class AttentionCapture { none, cls_rows, full };

/// How a forward pass treats the stochastic and statistics-dependent layers.
struct ForwardMode {
  bool drop_path = false;
  /// Normalize the projection head with batch statistics (else running ones).
  bool batch_stats = false;
  bool update_running_stats = false;
  AttentionCapture capture = AttentionCapture::none;

  static ForwardMode inference() { return {}; }
  static ForwardMode student_training() { return {true, true, true, AttentionCapture::none}; }
  /// The teacher normalizes with batch statistics but never updates buffers
  /// and never drops paths.
  static ForwardMode teacher_training() { return {false, true, false, AttentionCapture::none}; }
};

/// Attention of one image: for every layer the class token's row per head
/// (heads x tokens, column 0 is the class token itself), and optionally the
/// full matrices.
template <typename S>
struct AttentionRecord {
  std::vector<Matrix<S>> cls_rows;
  std::vector<std::vector<Matrix<S>>> full;
};

/// 1-D bicubic resampling matrix (out x in), half-pixel centres, A = -0.75,
/// clamped borders.
template <typename S>
Matrix<S> bicubic_matrix(int out, int in) {
  Matrix<S> m = Matrix<S>::Zero(out, in);
  const double a = -0.75;
  const double scale = static_cast<double>(in) / out;
  auto near = [a](double t) { return ((a + 2) * t - (a + 3)) * t * t + 1; };
  auto far = [a](double t) { return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a; };
  for (int i = 0; i < out; ++i) {
    const double x = (i + 0.5) * scale - 0.5;
    const int x0 = static_cast<int>(std::floor(x));
    const double t = x - x0;
    const double w[4] = {far(t + 1), near(t), near(1 - t), far(2 - t)};
    for (int k = 0; k < 4; ++k) {
      const int j = std::clamp(x0 - 1 + k, 0, in - 1);
      m(i, j) += static_cast<S>(w[k]);
    }
  }
  return m;
}

/// Maps a grid_in x grid_in position table to grid_out x grid_out.
template <typename S>
Matrix<S> position_interpolation(int grid_out, int grid_in) {
  const Matrix<S> m = bicubic_matrix<S>(grid_out, grid_in);
  Matrix<S> k(grid_out * grid_out, grid_in * grid_in);
  for (int r = 0; r < grid_out; ++r) {
    for (int c = 0; c < grid_out; ++c) {
      for (int i = 0; i < grid_in; ++i) {
        k.block(r * grid_out + c, i * grid_in, 1, grid_in) = m(r, i) * m.row(c);
      }
    }
  }
  return k;
}

/// Pre-norm transformer block: x + attn(ln1(x)), then + mlp(ln2(.)), with
/// per-sample drop path on both residual branches.
template <typename S>
struct Block {
  LayerNorm<S> norm1;
  Linear<S> qkv;
  Linear<S> proj;
  LayerNorm<S> norm2;
  Linear<S> fc1;
  Linear<S> fc2;
  int heads = 1;
  double drop_prob = 0.0;

  struct Cache {
    Matrix<S> x;
    typename LayerNorm<S>::Cache ln1;
    Matrix<S> a;
    Matrix<S> qkv;
    std::vector<Matrix<S>> attn;  // batch * heads, tokens x tokens
    Matrix<S> attn_out;
    Matrix<S> x1;
    typename LayerNorm<S>::Cache ln2;
    Matrix<S> m;
    Matrix<S> f;
    Matrix<S> g;
    std::vector<S> scale1;
    std::vector<S> scale2;
  };

  Block() = default;
  Block(const EncoderConfig& c, double drop)
      : norm1(c.embed_dim, c.norm_epsilon),
        qkv(c.embed_dim, 3 * c.embed_dim),
        proj(c.embed_dim, c.embed_dim),
        norm2(c.embed_dim, c.norm_epsilon),
        fc1(c.embed_dim, c.mlp_ratio * c.embed_dim),
        fc2(c.mlp_ratio * c.embed_dim, c.embed_dim),
        heads(c.heads),
        drop_prob(drop) {}

  void init(Rng& rng) {
    for (auto* l : {&qkv, &proj, &fc1, &fc2}) trunc_normal(l->weight.value, rng, 0.02);
  }

  std::vector<S> branch_scales(int batch, const ForwardMode& mode, Rng* rng) const {
    std::vector<S> s(batch, S(1));
    if (!mode.drop_path || drop_prob <= 0.0) return s;
    require(rng != nullptr, "drop path requires a random source");
    const S keep_scale = S(1.0 / (1.0 - drop_prob));
    for (auto& v : s) v = rng->bernoulli(1.0 - drop_prob) ? keep_scale : S(0);
    return s;
  }

  Matrix<S> forward(const Matrix<S>& x, int batch, int tokens, const ForwardMode& mode, Rng* rng,
                    Cache* cache, std::vector<AttentionRecord<S>>* records) const {
    const int dim = static_cast<int>(x.cols());
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));

    typename LayerNorm<S>::Cache ln1;
    Matrix<S> a = norm1.forward(x, cache ? &ln1 : nullptr);
    Matrix<S> q = qkv.forward(a);
    Matrix<S> attn_out(x.rows(), dim);
    std::vector<Matrix<S>> attn_cache;
    if (cache) attn_cache.reserve(static_cast<std::size_t>(batch) * heads);

    for (int b = 0; b < batch; ++b) {
      Matrix<S> cls_rows;
      if (records && mode.capture != AttentionCapture::none) cls_rows.resize(heads, tokens);
      std::vector<Matrix<S>> full;
      for (int h = 0; h < heads; ++h) {
        const auto qh = q.block(b * tokens, h * dh, tokens, dh);
        const auto kh = q.block(b * tokens, dim + h * dh, tokens, dh);
        const auto vh = q.block(b * tokens, 2 * dim + h * dh, tokens, dh);
        Matrix<S> att(tokens, tokens);
        att.noalias() = (qh * kh.transpose()) * scale;
        softmax_rows(att);
        attn_out.block(b * tokens, h * dh, tokens, dh).noalias() = att * vh;
        if (records && mode.capture != AttentionCapture::none) {
          cls_rows.row(h) = att.row(0);
          if (mode.capture == AttentionCapture::full) full.push_back(att);
        }
        if (cache) attn_cache.push_back(std::move(att));
      }
      if (records && mode.capture != AttentionCapture::none) {
        (*records)[b].cls_rows.push_back(std::move(cls_rows));
        if (mode.capture == AttentionCapture::full) (*records)[b].full.push_back(std::move(full));
      }
    }

    const auto s1 = branch_scales(batch, mode, rng);
    Matrix<S> p = proj.forward(attn_out);
    Matrix<S> x1 = x;
    for (int b = 0; b < batch; ++b) {
      if (s1[b] != S(0)) x1.middleRows(b * tokens, tokens) += s1[b] * p.middleRows(b * tokens, tokens);
    }

    typename LayerNorm<S>::Cache ln2;
    Matrix<S> m = norm2.forward(x1, cache ? &ln2 : nullptr);
    Matrix<S> f = fc1.forward(m);
    Matrix<S> g = gelu(f);
    Matrix<S> o = fc2.forward(g);
    const auto s2 = branch_scales(batch, mode, rng);
    Matrix<S> out = x1;
    for (int b = 0; b < batch; ++b) {
      if (s2[b] != S(0)) out.middleRows(b * tokens, tokens) += s2[b] * o.middleRows(b * tokens, tokens);
    }

    if (cache) {
      cache->x = x;
      cache->ln1 = std::move(ln1);
      cache->a = std::move(a);
      cache->qkv = std::move(q);
      cache->attn = std::move(attn_cache);
      cache->attn_out = std::move(attn_out);
      cache->x1 = std::move(x1);
      cache->ln2 = std::move(ln2);
      cache->m = std::move(m);
      cache->f = std::move(f);
      cache->g = std::move(g);
      cache->scale1 = s1;
      cache->scale2 = s2;
    }
    return out;
  }

  Matrix<S> backward(const Cache& c, const Matrix<S>& dout, int batch, int tokens) {
    const int dim = static_cast<int>(dout.cols());
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));

    Matrix<S> dx1 = dout;
    Matrix<S> d_o = dout;
    for (int b = 0; b < batch; ++b) d_o.middleRows(b * tokens, tokens) *= c.scale2[b];
    Matrix<S> dg = fc2.backward(c.g, d_o);
    Matrix<S> df = gelu_backward(c.f, dg);
    Matrix<S> dm = fc1.backward(c.m, df);
    dx1 += norm2.backward(c.ln2, dm);

    Matrix<S> dp = dx1;
    for (int b = 0; b < batch; ++b) dp.middleRows(b * tokens, tokens) *= c.scale1[b];
    Matrix<S> d_attn_out = proj.backward(c.attn_out, dp);

    Matrix<S> dqkv = Matrix<S>::Zero(c.qkv.rows(), c.qkv.cols());
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Matrix<S>& att = c.attn[static_cast<std::size_t>(b) * heads + h];
        const auto qh = c.qkv.block(b * tokens, h * dh, tokens, dh);
        const auto kh = c.qkv.block(b * tokens, dim + h * dh, tokens, dh);
        const auto vh = c.qkv.block(b * tokens, 2 * dim + h * dh, tokens, dh);
        const auto doh = d_attn_out.block(b * tokens, h * dh, tokens, dh);
        Matrix<S> datt(tokens, tokens);
        datt.noalias() = doh * vh.transpose();
        dqkv.block(b * tokens, 2 * dim + h * dh, tokens, dh).noalias() = att.transpose() * doh;
        // Softmax backward: dS = A * (dA - rowsum(dA * A)).
        Eigen::Matrix<S, Eigen::Dynamic, 1> inner = (datt.array() * att.array()).rowwise().sum();
        Matrix<S> dscore = att.array() * (datt.array().colwise() - inner.array());
        dscore *= scale;
        dqkv.block(b * tokens, h * dh, tokens, dh).noalias() = dscore * kh;
        dqkv.block(b * tokens, dim + h * dh, tokens, dh).noalias() = dscore.transpose() * qh;
      }
    }
    Matrix<S> da = qkv.backward(c.a, dqkv);
    return dx1 + norm1.backward(c.ln1, da);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    norm1.collect(prefix + ".norm1", out);
    qkv.collect(prefix + ".attn.qkv", out);
    proj.collect(prefix + ".attn.proj", out);
    norm2.collect(prefix + ".norm2", out);
    fc1.collect(prefix + ".mlp.fc1", out);
    fc2.collect(prefix + ".mlp.fc2", out);
  }
};

/// Vision transformer encoder: 8x8 patch embedding, class token, learned
/// positions (bicubically resampled for other view sizes), pre-norm blocks
/// and a final layer norm on the class token.
template <typename S>
class Encoder {
 public:
  struct Tape {
    int batch = 0;
    int grid = 0;
    Matrix<S> patches;
    Matrix<S> interp;  // empty when the native grid is used
    std::vector<typename Block<S>::Cache> blocks;
    Matrix<S> cls_out;
    typename LayerNorm<S>::Cache norm;
  };

  Encoder() = default;
  explicit Encoder(const EncoderConfig& config) : config_(config) {
    config.validate();
    const int d = config.embed_dim;
    const int p = config.patch_size;
    patch_embed_ = Linear<S>(p * p, d);
    cls_token_ = Param<S>(1, d, false);
    pos_embed_ = Param<S>(config.tokens(), d, false);
    for (int i = 0; i < config.depth; ++i) {
      const double drop =
          config.depth > 1 ? config.drop_path_rate * i / (config.depth - 1) : config.drop_path_rate;
      blocks_.emplace_back(config, drop);
    }
    norm_ = LayerNorm<S>(d, config.norm_epsilon);
  }

  const EncoderConfig& config() const { return config_; }

  void init(Rng& rng) {
    const int fan_in = config_.patch_size * config_.patch_size;
    uniform_fill(patch_embed_.weight.value, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    uniform_fill(patch_embed_.bias.value, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    trunc_normal(cls_token_.value, rng, 0.02);
    trunc_normal(pos_embed_.value, rng, 0.02);
    for (auto& b : blocks_) b.init(rng);
  }

  /// Token sequence (1 + grid^2 rows) for one image: class token plus patch
  /// projections, with position embeddings added.
  Matrix<S> patchify(const Image& image) const {
    Image const* one[] = {&image};
    Matrix<S> patches;
    Matrix<S> interp;
    const int g = check_side(image);
    return embed(one, g, patches, interp);
  }

  /// Runs a group of equally sized images. Returns class features
  /// (batch x embed_dim).
  Matrix<S> forward(std::span<const Image* const> images, const ForwardMode& mode, Rng* rng,
                    Tape* tape, std::vector<AttentionRecord<S>>* records) const {
    require(!images.empty(), "empty image group");
    const int g = check_side(*images.front());
    for (const auto* im : images) {
      if (im->rows() != images.front()->rows() || im->cols() != images.front()->cols()) {
        invalid("images in one group must share a size");
      }
    }
    const int batch = static_cast<int>(images.size());
    const int tokens = g * g + 1;
    if (records) records->assign(batch, {});

    Matrix<S> patches;
    Matrix<S> interp;
    Matrix<S> x = embed(images, g, patches, interp);
    if (tape) {
      tape->batch = batch;
      tape->grid = g;
      tape->blocks.resize(blocks_.size());
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(x, batch, tokens, mode, rng, tape ? &tape->blocks[i] : nullptr, records);
    }
    Matrix<S> cls(batch, x.cols());
    for (int b = 0; b < batch; ++b) cls.row(b) = x.row(b * tokens);
    Matrix<S> out = norm_.forward(cls, tape ? &tape->norm : nullptr);
    if (tape) {
      tape->patches = std::move(patches);
      tape->interp = std::move(interp);
    }
    return out;
  }

  /// Back-propagates dL/d(features) into the parameter gradients.
  void backward(Tape& tape, const Matrix<S>& d_features) {
    const int batch = tape.batch;
    const int tokens = tape.grid * tape.grid + 1;
    const Matrix<S> dcls = norm_.backward(tape.norm, d_features);
    Matrix<S> dx = Matrix<S>::Zero(static_cast<Eigen::Index>(batch) * tokens, dcls.cols());
    for (int b = 0; b < batch; ++b) dx.row(b * tokens) = dcls.row(b);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      dx = blocks_[i].backward(tape.blocks[i], dx, batch, tokens);
    }

    const int np = tape.grid * tape.grid;
    Matrix<S> dpos_patch = Matrix<S>::Zero(np, dx.cols());
    Matrix<S> dtok(static_cast<Eigen::Index>(batch) * np, dx.cols());
    for (int b = 0; b < batch; ++b) {
      cls_token_.grad.row(0) += dx.row(b * tokens);
      pos_embed_.grad.row(0) += dx.row(b * tokens);
      dpos_patch += dx.middleRows(b * tokens + 1, np);
      dtok.middleRows(b * np, np) = dx.middleRows(b * tokens + 1, np);
    }
    if (tape.interp.size() == 0) {
      pos_embed_.grad.bottomRows(np) += dpos_patch;
    } else {
      pos_embed_.grad.bottomRows(pos_embed_.value.rows() - 1).noalias() +=
          tape.interp.transpose() * dpos_patch;
    }
    patch_embed_.backward(tape.patches, dtok);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".cls_token", &cls_token_});
    out.push_back({prefix + ".pos_embed", &pos_embed_});
    patch_embed_.collect(prefix + ".patch_embed.proj", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].collect(prefix + ".blocks." + std::to_string(i), out);
    }
    norm_.collect(prefix + ".norm", out);
  }

  int depth() const { return static_cast<int>(blocks_.size()); }

 private:
  int check_side(const Image& image) const {
    const int p = config_.patch_size;
    if (image.rows() != image.cols() || image.rows() % p != 0 || image.rows() == 0) {
      invalid("indivisible input: " + std::to_string(image.rows()) + "x" +
              std::to_string(image.cols()) + " is not a square multiple of patch size " +
              std::to_string(p));
    }
    return static_cast<int>(image.rows()) / p;
  }

  Matrix<S> embed(std::span<const Image* const> images, int g, Matrix<S>& patches,
                  Matrix<S>& interp) const {
    const int p = config_.patch_size;
    const int np = g * g;
    const int batch = static_cast<int>(images.size());
    const int tokens = np + 1;
    const S mean = S(config_.input_mean);
    const S inv_std = S(1.0 / config_.input_std);

    patches.resize(static_cast<Eigen::Index>(batch) * np, p * p);
    for (int b = 0; b < batch; ++b) {
      const Image& im = *images[b];
      for (int pr = 0; pr < g; ++pr) {
        for (int pc = 0; pc < g; ++pc) {
          const auto row = static_cast<Eigen::Index>(b) * np + pr * g + pc;
          for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) {
              patches(row, i * p + j) = (S(im(pr * p + i, pc * p + j)) - mean) * inv_std;
            }
          }
        }
      }
    }
    const Matrix<S> tok = patch_embed_.forward(patches);

    const int g0 = config_.grid();
    Matrix<S> pos_patch;
    if (g == g0) {
      interp.resize(0, 0);
      pos_patch = pos_embed_.value.bottomRows(np);
    } else {
      interp = position_interpolation<S>(g, g0);
      pos_patch = interp * pos_embed_.value.bottomRows(pos_embed_.value.rows() - 1);
    }

    Matrix<S> x(static_cast<Eigen::Index>(batch) * tokens, config_.embed_dim);
    for (int b = 0; b < batch; ++b) {
      x.row(b * tokens) = cls_token_.value.row(0) + pos_embed_.value.row(0);
      x.middleRows(b * tokens + 1, np) = tok.middleRows(b * np, np) + pos_patch;
    }
    return x;
  }

  EncoderConfig config_;
  Linear<S> patch_embed_;
  Param<S> cls_token_;
  Param<S> pos_embed_;
  std::vector<Block<S>> blocks_;
  LayerNorm<S> norm_;
};

}  // namespace screen::model
