#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/hash.hpp"
#include "oncoabs/model/han.hpp"

namespace oncoabs::model {

inline constexpr char kCheckpointMagic[4] = {'O', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header stored next to the weights. `labels` maps classifier outputs to
/// label codes; empty for encoder-only checkpoints.
struct CheckpointMeta {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::string attribute;
  std::vector<std::string> labels;
  bool encoder_only = false;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::string_view take(std::size_t n) {
    if (pos_ + n > b_.size()) throw FormatError("checkpoint truncated");
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

inline std::uint32_t float_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}
inline float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace detail

/// Binary layout: magic, version, vocabulary hash, JSON header, then each
/// selected parameter as name, shape and little-endian float32 values.
template <typename T>
std::string serialize_checkpoint(const HanModel<T>& model, const CheckpointMeta& meta_in) {
  CheckpointMeta meta = meta_in;
  meta.config = model.config();
  nlohmann::ordered_json h;
  h["config"] = to_json(meta.config);
  h["attribute"] = meta.attribute;
  h["labels"] = meta.labels;
  h["encoder_only"] = meta.encoder_only;
  h["extra"] = meta.extra;
  const std::string header = h.dump();

  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, meta.vocab_hash);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  std::vector<const num::Parameter<T>*> chosen;
  for (const auto& p : model.parameters())
    if (!meta.encoder_only || is_encoder_parameter(p.name)) chosen.push_back(&p);
  detail::put_u32(out, static_cast<std::uint32_t>(chosen.size()));
  for (const auto* p : chosen) {
    detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    detail::put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (std::size_t i = 0; i < p->value.size(); ++i)
      detail::put_u32(out, detail::float_bits(static_cast<float>(p->value[i])));
  }
  return out;
}

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

inline LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(4) != std::string_view(kCheckpointMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported");
  LoadedCheckpoint c;
  c.meta.vocab_hash = r.u64();
  const auto hlen = r.u32();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.take(hlen));
    c.meta.config = model_config_from_json(h.at("config"));
    c.meta.attribute = h.at("attribute").get<std::string>();
    c.meta.labels = h.at("labels").get<std::vector<std::string>>();
    c.meta.encoder_only = h.at("encoder_only").get<bool>();
    c.meta.extra = h.value("extra", nlohmann::ordered_json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  const auto n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    std::string name(r.take(r.u32()));
    const auto rows = r.u32(), cols = r.u32();
    Tensor<float> t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::bits_float(r.u32());
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

/// Copies stored tensors into `model` by name. Refuses a checkpoint built
/// on a different vocabulary or with mismatched shapes.
template <typename T>
void load_weights(HanModel<T>& model, const LoadedCheckpoint& c, std::uint64_t expected_vocab_hash) {
  if (c.meta.vocab_hash != expected_vocab_hash)
    throw FormatError("checkpoint was trained with vocabulary " + hex64(c.meta.vocab_hash) + " but vocabulary " +
                      hex64(expected_vocab_hash) + " is loaded");
  for (const auto& [name, t] : c.tensors) {
    if (!model.parameters().contains(name)) throw FormatError("checkpoint parameter " + name + " not in model");
    auto& p = model.parameters().at(name);
    if (p.value.rows() != t.rows() || p.value.cols() != t.cols())
      throw FormatError("checkpoint parameter " + name + " has shape " + t.shape_string() + ", model expects " +
                        p.value.shape_string());
    for (std::size_t i = 0; i < t.size(); ++i) p.value[i] = static_cast<T>(t[i]);
  }
}

/// Rebuilds a full classifier from a non-encoder-only checkpoint.
template <typename T>
HanModel<T> model_from_checkpoint(const LoadedCheckpoint& c, std::uint64_t expected_vocab_hash) {
  if (c.meta.encoder_only) throw FormatError("checkpoint holds only an encoder, not a classifier");
  HanModel<T> m(c.meta.config);
  load_weights(m, c, expected_vocab_hash);
  for (const auto& p : m.parameters()) {
    bool found = false;
    for (const auto& [name, t] : c.tensors) found = found || name == p.name;
    if (!found) throw FormatError("checkpoint lacks parameter " + p.name);
  }
  return m;
}

inline std::string checkpoint_filename(std::string_view attribute, EncoderKind e) {
  return std::string(attribute) + "." + std::string(name(e)) + ".ckpt";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const HanModel<T>& model, const CheckpointMeta& meta) {
  write_file(path, serialize_checkpoint(model, meta));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("checkpoint " + path.string(), "train");
  return parse_checkpoint(read_file(path));
}

}  // namespace oncoabs::model
