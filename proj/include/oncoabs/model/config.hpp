#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "oncoabs/common/error.hpp"

namespace oncoabs::model {

enum class EncoderKind { ContextFree, TinyTransformer };

inline std::string_view name(EncoderKind e) { return e == EncoderKind::ContextFree ? "context-free" : "transformer"; }

inline EncoderKind parse_encoder(std::string_view s) {
  if (s == "context-free" || s == "ContextFree" || s == "cf") return EncoderKind::ContextFree;
  if (s == "transformer" || s == "TinyTransformer" || s == "tiny-transformer") return EncoderKind::TinyTransformer;
  throw ConfigError("encoder", "unknown encoder '" + std::string(s) + "' (context-free|transformer)");
}

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 128;
  EncoderKind encoder = EncoderKind::ContextFree;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t max_positions = 64;
  std::size_t gru_hidden = 64;
  std::size_t word_attn_dim = 64;
  std::size_t sent_attn_dim = 64;
  std::size_t n_classes = 2;
  bool bidirectional_sentence_gru = true;
  double dropout_rate = 0.1;
  std::uint64_t seed = 1;

  std::size_t sentence_dim() const { return bidirectional_sentence_gru ? 2 * gru_hidden : gru_hidden; }

  void validate() const {
    if (vocab_size <= 8) throw ConfigError("vocab_size", "must exceed the special-token count");
    if (embed_dim == 0) throw ConfigError("embed_dim", "must be positive");
    if (n_classes < 2) throw ConfigError("n_classes", "must be at least 2");
    if (gru_hidden == 0 || word_attn_dim == 0 || sent_attn_dim == 0)
      throw ConfigError("gru_hidden", "hidden and attention sizes must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate", "must be in [0, 1)");
    if (encoder == EncoderKind::TinyTransformer) {
      if (heads == 0 || embed_dim % heads != 0) throw ConfigError("heads", "embed_dim must be divisible by heads");
      if (layers == 0) throw ConfigError("layers", "must be at least 1");
      if (ff_dim == 0) throw ConfigError("ff_dim", "must be positive");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["encoder"] = std::string(name(c.encoder));
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["ff_dim"] = c.ff_dim;
  j["max_positions"] = c.max_positions;
  j["gru_hidden"] = c.gru_hidden;
  j["word_attn_dim"] = c.word_attn_dim;
  j["sent_attn_dim"] = c.sent_attn_dim;
  j["n_classes"] = c.n_classes;
  j["bidirectional_sentence_gru"] = c.bidirectional_sentence_gru;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.encoder = parse_encoder(j.at("encoder").get<std::string>());
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.word_attn_dim = j.at("word_attn_dim").get<std::size_t>();
  c.sent_attn_dim = j.at("sent_attn_dim").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.bidirectional_sentence_gru = j.at("bidirectional_sentence_gru").get<bool>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace oncoabs::model
