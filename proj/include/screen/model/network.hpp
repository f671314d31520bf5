#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "screen/model/encoder.hpp"
#include "screen/model/heads.hpp"

namespace screen::model {

enum class Role { teacher, student };

inline std::string_view to_string(Role r) { return r == Role::teacher ? "teacher" : "student"; }

inline Role parse_role(std::string_view s) {
  if (s == "teacher") return Role::teacher;
  if (s == "student") return Role::student;
  invalid("unknown role '" + std::string(s) + "'");
}

enum class Heads : unsigned { dino = 1, cls = 2, both = 3 };

constexpr bool has(Heads set, Heads h) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(h)) != 0;
}

/// Encoder plus self-distillation and classifier heads. Plays either the
/// teacher or the student role; both roles share identical shapes.
template <typename S>
class Network {
 public:
  struct Output {
    Matrix<S> features;  // views x embed_dim, input order
    Matrix<S> scores;    // views x K (when the dino head ran)
    Matrix<S> logits;    // views x 1 (when the cls head ran)
    std::vector<AttentionRecord<S>> attention;  // per view, when captured
  };

  struct Tape {
    std::vector<typename Encoder<S>::Tape> groups;
    std::vector<std::vector<int>> members;  // view indices per group
    typename DinoHead<S>::Tape dino;
    typename ClsHead<S>::Tape cls;
    Heads heads = Heads::both;
  };

  Network() = default;
  Network(const EncoderConfig& enc, const HeadConfig& heads, Role role = Role::student)
      : encoder_config_(enc),
        head_config_(heads),
        role_(role),
        encoder_(enc),
        dino_(enc.embed_dim, heads),
        cls_(enc.embed_dim, heads) {
    heads.validate();
  }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    encoder_.init(rng);
    dino_.init(rng);
    cls_.init(rng);
  }

  /// Multi-crop forward: views of equal side run through the encoder as one
  /// group, heads run once over all features (so batch statistics span every
  /// view), and rows come back in input order.
  Output forward(std::span<const Image* const> views, Heads heads, ForwardMode mode, Rng* rng,
                 Tape* tape) {
    require(!views.empty(), "empty view list");
    if (role_ == Role::teacher) mode.drop_path = false;
    const int n = static_cast<int>(views.size());

    std::vector<long> sides;
    std::vector<std::vector<int>> members;
    for (int i = 0; i < n; ++i) {
      const long side = views[i]->rows();
      auto it = std::find(sides.begin(), sides.end(), side);
      if (it == sides.end()) {
        sides.push_back(side);
        members.push_back({i});
      } else {
        members[it - sides.begin()].push_back(i);
      }
    }

    Output out;
    out.features.resize(n, encoder_config_.embed_dim);
    if (mode.capture != AttentionCapture::none) out.attention.resize(n);
    if (tape) {
      tape->groups.assign(members.size(), {});
      tape->members = members;
      tape->heads = heads;
    }
    for (std::size_t g = 0; g < members.size(); ++g) {
      std::vector<const Image*> group;
      for (int i : members[g]) group.push_back(views[i]);
      std::vector<AttentionRecord<S>> records;
      const Matrix<S> f =
          encoder_.forward(group, mode, rng, tape ? &tape->groups[g] : nullptr,
                           mode.capture != AttentionCapture::none ? &records : nullptr);
      for (std::size_t k = 0; k < members[g].size(); ++k) {
        out.features.row(members[g][k]) = f.row(static_cast<Eigen::Index>(k));
        if (!records.empty()) out.attention[members[g][k]] = std::move(records[k]);
      }
    }
    if (has(heads, Heads::dino)) {
      out.scores = dino_.forward(out.features, mode.batch_stats, mode.update_running_stats,
                                 tape ? &tape->dino : nullptr);
    }
    if (has(heads, Heads::cls)) out.logits = cls_.forward(out.features, tape ? &tape->cls : nullptr);
    return out;
  }

  /// Convenience overload for a single image in inference mode.
  Output infer(const Image& image, Heads heads = Heads::cls,
               AttentionCapture capture = AttentionCapture::none) {
    const Image* one[] = {&image};
    ForwardMode mode = ForwardMode::inference();
    mode.capture = capture;
    return forward(one, heads, mode, nullptr, nullptr);
  }

  /// Accumulates gradients for the given output gradients (either may be null).
  void backward(Tape& tape, const Matrix<S>* d_scores, const Matrix<S>* d_logits) {
    require(role_ == Role::student, "gradient steps are only defined for the student role");
    Matrix<S> d_features;
    auto add = [&d_features](Matrix<S> d) {
      if (d_features.size() == 0) {
        d_features = std::move(d);
      } else {
        d_features += d;
      }
    };
    if (d_scores && has(tape.heads, Heads::dino)) add(dino_.backward(tape.dino, *d_scores));
    if (d_logits && has(tape.heads, Heads::cls)) add(cls_.backward(tape.cls, *d_logits));
    if (d_features.size() == 0) return;
    for (std::size_t g = 0; g < tape.groups.size(); ++g) {
      Matrix<S> dg(static_cast<Eigen::Index>(tape.members[g].size()), d_features.cols());
      for (std::size_t k = 0; k < tape.members[g].size(); ++k) {
        dg.row(static_cast<Eigen::Index>(k)) = d_features.row(tape.members[g][k]);
      }
      encoder_.backward(tape.groups[g], dg);
    }
  }

  ParamList<S> params() {
    ParamList<S> out;
    encoder_.collect("encoder", out);
    dino_.collect("dino_head", out);
    cls_.collect("cls_head", out);
    return out;
  }

  BufferList<S> buffers() {
    BufferList<S> out;
    dino_.collect_buffers("dino_head", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : params()) p.param->zero_grad();
  }

  Role role() const { return role_; }
  void set_role(Role r) { role_ = r; }
  const EncoderConfig& encoder_config() const { return encoder_config_; }
  const HeadConfig& head_config() const { return head_config_; }

  Encoder<S>& encoder() { return encoder_; }
  DinoHead<S>& dino_head() { return dino_; }
  ClsHead<S>& cls_head() { return cls_; }

  /// Same weights in another scalar type.
  template <typename T>
  Network<T> cast() const {
    Network<T> out(encoder_config_, head_config_, role_);
    auto& self = const_cast<Network&>(*this);
    auto src = self.params();
    auto dst = out.params();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i].param->value = src[i].param->value.template cast<T>();
    }
    auto sb = self.buffers();
    auto db = out.buffers();
    for (std::size_t i = 0; i < sb.size(); ++i) *db[i].value = sb[i].value->template cast<T>();
    return out;
  }

 private:
  EncoderConfig encoder_config_;
  HeadConfig head_config_;
  Role role_ = Role::student;
  Encoder<S> encoder_;
  DinoHead<S> dino_;
  ClsHead<S> cls_;
};

/// True when both networks have elementwise identical parameter shapes.
template <typename S>
bool same_shapes(Network<S>& a, Network<S>& b) {
  auto pa = a.params();
  auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || pa[i].param->value.rows() != pb[i].param->value.rows() ||
        pa[i].param->value.cols() != pb[i].param->value.cols()) {
      return false;
    }
  }
  return true;
}

}  // namespace screen::model
