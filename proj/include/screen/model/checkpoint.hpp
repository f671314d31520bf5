#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "screen/core/atomic_file.hpp"
#include "screen/core/error.hpp"
#include "screen/model/cnn.hpp"
#include "screen/model/network.hpp"

namespace screen::model {

/// On-disk layout (host byte order):
///   "SCRNCKPT" | u32 version | u64 meta length | meta JSON
///   | u32 array count | per array: u32 name length, name, u64 rows, u64 cols,
///     rows*cols values (f32 or f64 per meta "dtype")
///   | u64 FNV-1a of all preceding bytes
/// A file whose checksum does not match is rejected, so a partially written
/// checkpoint never loads.
inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Matrix<double> value;
};

struct Archive {
  nlohmann::json meta;
  std::vector<NamedArray> arrays;

  const Matrix<double>& at(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return a.value;
    }
    fail("checkpoint is missing array '" + name + "'");
  }
  bool contains(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return true;
    }
    return false;
  }
};

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"patch_size", c.patch_size},     {"embed_dim", c.embed_dim},
          {"depth", c.depth},               {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},       {"norm_epsilon", c.norm_epsilon},
          {"drop_path_rate", c.drop_path_rate}, {"input_side", c.input_side},
          {"local_side", c.local_side},     {"input_mean", c.input_mean},
          {"input_std", c.input_std}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.patch_size = j.at("patch_size");
  c.embed_dim = j.at("embed_dim");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.mlp_ratio = j.at("mlp_ratio");
  c.norm_epsilon = j.at("norm_epsilon");
  c.drop_path_rate = j.at("drop_path_rate");
  c.input_side = j.at("input_side");
  c.local_side = j.at("local_side");
  c.input_mean = j.at("input_mean");
  c.input_std = j.at("input_std");
  return c;
}

inline nlohmann::json to_json(const HeadConfig& c) {
  return {{"dino_out_dim", c.dino_out_dim},
          {"dino_hidden_dim", c.dino_hidden_dim},
          {"bottleneck_dim", c.bottleneck_dim},
          {"cls_hidden_dim", c.cls_hidden_dim}};
}

inline HeadConfig heads_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.dino_out_dim = j.at("dino_out_dim");
  c.dino_hidden_dim = j.at("dino_hidden_dim");
  c.bottleneck_dim = j.at("bottleneck_dim");
  c.cls_hidden_dim = j.at("cls_hidden_dim");
  return c;
}

inline nlohmann::json to_json(const CnnConfig& c) {
  return {{"input_side", c.input_side}, {"conv1_filters", c.conv1_filters},
          {"conv2_filters", c.conv2_filters}, {"kernel", c.kernel},
          {"input_mean", c.input_mean}, {"input_std", c.input_std}};
}

inline CnnConfig cnn_from_json(const nlohmann::json& j) {
  CnnConfig c;
  c.input_side = j.at("input_side");
  c.conv1_filters = j.at("conv1_filters");
  c.conv2_filters = j.at("conv2_filters");
  c.kernel = j.at("kernel");
  c.input_mean = j.at("input_mean");
  c.input_std = j.at("input_std");
  return c;
}

namespace detail {

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail("truncated checkpoint");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void write_archive(const std::filesystem::path& path, const Archive& archive,
                          bool single_precision) {
  nlohmann::json meta = archive.meta;
  meta["dtype"] = single_precision ? "float32" : "float64";
  const std::string meta_text = meta.dump();

  std::string buf(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put(buf, kCheckpointVersion);
  detail::put(buf, static_cast<std::uint64_t>(meta_text.size()));
  buf += meta_text;
  detail::put(buf, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    detail::put(buf, static_cast<std::uint32_t>(a.name.size()));
    buf += a.name;
    detail::put(buf, static_cast<std::uint64_t>(a.value.rows()));
    detail::put(buf, static_cast<std::uint64_t>(a.value.cols()));
    for (Eigen::Index i = 0; i < a.value.size(); ++i) {
      if (single_precision) {
        detail::put(buf, static_cast<float>(a.value.data()[i]));
      } else {
        detail::put(buf, a.value.data()[i]);
      }
    }
  }
  detail::put(buf, fnv1a(buf));
  write_file_atomic(path, buf);
}

inline Archive read_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail("checkpoint not found: " + path.string());
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof kCheckpointMagic + sizeof(std::uint64_t)) {
    fail("truncated checkpoint: " + path.string());
  }
  const std::string_view body(bytes.data(), bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
  if (fnv1a(body) != stored) fail("checkpoint checksum mismatch (truncated or corrupt): " + path.string());

  detail::Reader in(body);
  if (in.take(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    fail("not a checkpoint file: " + path.string());
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail("unsupported checkpoint version " + std::to_string(version));
  }
  Archive archive;
  const auto meta_len = in.get<std::uint64_t>();
  archive.meta = nlohmann::json::parse(in.take(meta_len));
  const bool single = archive.meta.at("dtype") == "float32";
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    const auto name_len = in.get<std::uint32_t>();
    a.name = std::string(in.take(name_len));
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    a.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < a.value.size(); ++i) {
      a.value.data()[i] = single ? static_cast<double>(in.get<float>()) : in.get<double>();
    }
    archive.arrays.push_back(std::move(a));
  }
  if (in.remaining() != 0) fail("trailing bytes in checkpoint: " + path.string());
  return archive;
}

template <typename S>
void save_network(const std::filesystem::path& path, Network<S>& net, int stage,
                  const std::vector<NamedArray>& extras = {}) {
  Archive a;
  a.meta = {{"arch", "vit"},
            {"role", std::string(to_string(net.role()))},
            {"stage", stage},
            {"encoder", to_json(net.encoder_config())},
            {"heads", to_json(net.head_config())}};
  for (auto& p : net.params()) a.arrays.push_back({p.name, p.param->value.template cast<double>()});
  for (auto& b : net.buffers()) a.arrays.push_back({b.name, b.value->template cast<double>()});
  for (const auto& e : extras) a.arrays.push_back(e);
  write_archive(path, a, std::is_same_v<S, float>);
}

template <typename S>
struct LoadedNetwork {
  Network<S> network;
  int stage = 0;
  Archive archive;
};

template <typename S>
LoadedNetwork<S> load_network(const std::filesystem::path& path) {
  LoadedNetwork<S> out;
  out.archive = read_archive(path);
  const nlohmann::json& meta = out.archive.meta;
  if (meta.at("arch") != "vit") fail("checkpoint is not a transformer network: " + path.string());
  out.network = Network<S>(encoder_from_json(meta.at("encoder")), heads_from_json(meta.at("heads")),
                           parse_role(meta.at("role").get<std::string>()));
  out.stage = meta.at("stage");
  auto assign = [&](const std::string& name, Matrix<S>& dst) {
    const auto& src = out.archive.at(name);
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      fail("shape mismatch for '" + name + "' in " + path.string());
    }
    dst = src.template cast<S>();
  };
  for (auto& p : out.network.params()) assign(p.name, p.param->value);
  for (auto& b : out.network.buffers()) assign(b.name, *b.value);
  return out;
}

template <typename S>
void save_cnn(const std::filesystem::path& path, BaselineCnn<S>& net) {
  Archive a;
  a.meta = {{"arch", "cnn"}, {"role", "student"}, {"stage", 0}, {"cnn", to_json(net.config())}};
  for (auto& p : net.params()) a.arrays.push_back({p.name, p.param->value.template cast<double>()});
  write_archive(path, a, std::is_same_v<S, float>);
}

template <typename S>
BaselineCnn<S> load_cnn(const std::filesystem::path& path) {
  const auto archive = read_archive(path);
  if (archive.meta.at("arch") != "cnn") fail("checkpoint is not a baseline CNN: " + path.string());
  BaselineCnn<S> net(cnn_from_json(archive.meta.at("cnn")));
  for (auto& p : net.params()) {
    const auto& src = archive.at(p.name);
    if (src.rows() != p.param->value.rows() || src.cols() != p.param->value.cols()) {
      fail("shape mismatch for '" + p.name + "'");
    }
    p.param->value = src.template cast<S>();
  }
  return net;
}

}  // namespace screen::model
