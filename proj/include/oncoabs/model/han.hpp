#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/model/config.hpp"
#include "oncoabs/numcore/ops.hpp"
#include "oncoabs/numcore/tape.hpp"
#include "oncoabs/textproc/assemble.hpp"

namespace oncoabs::model {

using num::Segment;
using num::Tape;
using num::Tensor;
using num::Var;

struct Prediction {
  std::vector<double> probabilities;
  std::vector<double> sentence_attention;           // one per sentence
  std::vector<std::vector<double>> word_attention;  // per sentence, one per token of that sentence
  std::size_t predicted = 0;
};

/// Training mode enables dropout. A distinct type keeps pointer and integer
/// arguments from converting silently.
enum class Mode { Eval, Train };

template <typename T>
struct ForwardResult {
  Var<T> logits;          // [1, C]
  Var<T> sentence_alpha;  // [S, 1]
  Var<T> word_alpha;      // [n, 1] over the flattened tokens
  Var<T> tokens;          // [n, d] encoder output
  std::vector<Segment> segments;
};

/// Hierarchical attention network: token encoder, word attention pooling
/// into sentence vectors, bidirectional GRU over sentences, sentence
/// attention pooling into a document vector, linear classifier.
template <typename T>
class HanModel {
 public:
  explicit HanModel(ModelConfig cfg) : cfg_(std::move(cfg)), dropout_rng_(cfg_.seed ^ 0x5eedd20u) {
    cfg_.validate();
    init();
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  num::ParameterSet<T>& parameters() noexcept { return params_; }
  const num::ParameterSet<T>& parameters() const noexcept { return params_; }

  void set_dropout_seed(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  Var<T> bind(Tape<T>& t, std::string_view name) {
    if (t.grad_enabled()) return t.param(params_.at(name));
    return t.param(std::as_const(params_).at(name));
  }
  Var<T> bind(Tape<T>& t, std::string_view name) const {
    return t.param(params_.at(name));
  }

  /// Token embeddings, plus learned positions for the transformer encoder.
  Var<T> embed(Tape<T>& t, const std::vector<std::size_t>& ids, const std::vector<Segment>& segs, Mode mode) {
    return embed_impl(*this, t, ids, segs, mode == Mode::Train);
  }
  Var<T> embed(Tape<T>& t, const std::vector<std::size_t>& ids, const std::vector<Segment>& segs) const {
    return embed_impl(*this, t, ids, segs, false);
  }

  /// Contextualizes token rows within each sentence segment. Identity for
  /// the context-free encoder. `attn_out` receives per-layer attention maps.
  Var<T> encode(Tape<T>& t, Var<T> x, const std::vector<Segment>& segs, Mode mode,
                std::vector<std::vector<std::vector<T>>>* attn_out = nullptr) {
    return encode_impl(*this, t, x, segs, mode == Mode::Train, attn_out);
  }
  Var<T> encode(Tape<T>& t, Var<T> x, const std::vector<Segment>& segs,
                std::vector<std::vector<std::vector<T>>>* attn_out = nullptr) const {
    return encode_impl(*this, t, x, segs, false, attn_out);
  }

  ForwardResult<T> forward(Tape<T>& t, const text::TokenSequence& seq, Mode mode) {
    return forward_impl(*this, t, seq, mode == Mode::Train);
  }
  ForwardResult<T> forward(Tape<T>& t, const text::TokenSequence& seq) const {
    return forward_impl(*this, t, seq, false);
  }

  /// Cross-entropy of the gold class; gradients land in the parameters
  /// after `t.backward`.
  Var<T> loss(Tape<T>& t, const text::TokenSequence& seq, std::size_t label, Mode mode) {
    if (label >= cfg_.n_classes) throw DimensionError("label index outside the label space");
    auto r = forward(t, seq, mode);
    return num::cross_entropy(r.logits, {label});
  }

  Prediction predict(const text::TokenSequence& seq) const {
    Tape<T> t(false);
    auto r = forward(t, seq);
    Prediction p;
    const auto& L = r.logits.value();
    double mx = -1e300;
    for (std::size_t c = 0; c < L.cols(); ++c) mx = std::max(mx, static_cast<double>(L(0, c)));
    double z = 0.0;
    p.probabilities.resize(L.cols());
    for (std::size_t c = 0; c < L.cols(); ++c) z += p.probabilities[c] = std::exp(static_cast<double>(L(0, c)) - mx);
    for (auto& v : p.probabilities) v /= z;
    p.predicted = static_cast<std::size_t>(
        std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
    const auto& sa = r.sentence_alpha.value();
    for (std::size_t i = 0; i < sa.rows(); ++i) p.sentence_attention.push_back(static_cast<double>(sa[i]));
    const auto& wa = r.word_alpha.value();
    for (const auto& [b, e] : r.segments) {
      std::vector<double> w;
      for (std::size_t i = b; i < e; ++i) w.push_back(static_cast<double>(wa[i]));
      p.word_attention.push_back(std::move(w));
    }
    return p;
  }

  /// Runs one GRU direction over the rows of `x` [S, in]; returns [S, H].
  template <typename Self>
  static Var<T> gru_sequence(Self& self, Tape<T>& t, const std::string& prefix, Var<T> x) {
    const std::size_t H = self.cfg_.gru_hidden;
    auto wz = self.bind(t, prefix + ".w_z"), wr = self.bind(t, prefix + ".w_r"), wh = self.bind(t, prefix + ".w_h");
    auto uz = self.bind(t, prefix + ".u_z"), ur = self.bind(t, prefix + ".u_r"), uh = self.bind(t, prefix + ".u_h");
    auto bz = self.bind(t, prefix + ".b_z"), br = self.bind(t, prefix + ".b_r"), bh = self.bind(t, prefix + ".b_h");
    const std::size_t S = x.value().rows();
    auto xz = num::matmul(x, wz), xr = num::matmul(x, wr), xh = num::matmul(x, wh);
    auto h = t.constant(Tensor<T>(1, H));
    std::vector<Var<T>> outs;
    outs.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
      auto z = num::sigmoid(num::add(num::add(num::slice_rows(xz, s, s + 1), num::matmul(h, uz)), bz));
      auto r = num::sigmoid(num::add(num::add(num::slice_rows(xr, s, s + 1), num::matmul(h, ur)), br));
      auto hh = num::tanh(num::add(num::add(num::slice_rows(xh, s, s + 1), num::matmul(num::mul(r, h), uh)), bh));
      h = num::add(h, num::mul(z, num::sub(hh, h)));
      outs.push_back(h);
    }
    return num::concat(outs, 0);
  }

 private:
  template <typename Self>
  static Var<T> embed_impl(Self& self, Tape<T>& t, const std::vector<std::size_t>& ids,
                           const std::vector<Segment>& segs, bool train) {
    const auto& cfg = self.cfg_;
    auto x = num::gather_rows(self.bind(t, "embedding"), ids);
    if (cfg.encoder == EncoderKind::TinyTransformer) {
      std::vector<std::size_t> pos(ids.size());
      for (const auto& [b, e] : segs) {
        if (e - b > cfg.max_positions)
          throw DimensionError("sentence of " + std::to_string(e - b) + " tokens exceeds the position table (" +
                               std::to_string(cfg.max_positions) + ")");
        for (std::size_t i = b; i < e; ++i) pos[i] = i - b;
      }
      x = num::add(x, num::gather_rows(self.bind(t, "pos_embedding"), std::move(pos)));
    }
    return maybe_dropout(self, x, train);
  }

  template <typename Self>
  static Var<T> encode_impl(Self& self, Tape<T>& t, Var<T> x, const std::vector<Segment>& segs, bool train,
                            std::vector<std::vector<std::vector<T>>>* attn_out) {
    const auto& cfg = self.cfg_;
    if (cfg.encoder == EncoderKind::ContextFree) return x;
    const std::size_t d = cfg.embed_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      auto qkv = num::add(num::matmul(x, self.bind(t, p + ".wqkv")), self.bind(t, p + ".bqkv"));
      auto q = num::slice_cols(qkv, 0, d), k = num::slice_cols(qkv, d, 2 * d), v = num::slice_cols(qkv, 2 * d, 3 * d);
      std::vector<std::vector<T>> probs;
      auto a = num::segment_self_attention(q, k, v, segs, cfg.heads, attn_out ? &probs : nullptr);
      if (attn_out) attn_out->push_back(std::move(probs));
      a = num::add(num::matmul(a, self.bind(t, p + ".wo")), self.bind(t, p + ".bo"));
      a = maybe_dropout(self, a, train);
      x = num::layer_norm(num::add(x, a), self.bind(t, p + ".ln1.g"), self.bind(t, p + ".ln1.b"));
      auto f = num::relu(num::add(num::matmul(x, self.bind(t, p + ".w1")), self.bind(t, p + ".b1")));
      f = num::add(num::matmul(f, self.bind(t, p + ".w2")), self.bind(t, p + ".b2"));
      f = maybe_dropout(self, f, train);
      x = num::layer_norm(num::add(x, f), self.bind(t, p + ".ln2.g"), self.bind(t, p + ".ln2.b"));
    }
    return x;
  }

  template <typename Self>
  static ForwardResult<T> forward_impl(Self& self, Tape<T>& t, const text::TokenSequence& seq, bool train) {
    if (seq.sentences.empty()) throw EmptyInputError("token sequence has no sentences");
    std::vector<std::size_t> ids;
    std::vector<Segment> segs;
    for (const auto& [b, e] : seq.sentences) {
      if (e <= b || e > seq.ids.size()) throw DimensionError("malformed sentence range");
      const std::size_t start = ids.size();
      for (std::size_t i = b; i < e; ++i) {
        if (seq.ids[i] >= self.cfg_.vocab_size) throw DimensionError("token id outside the vocabulary");
        ids.push_back(seq.ids[i]);
      }
      segs.emplace_back(start, ids.size());
    }
    ForwardResult<T> r;
    r.segments = segs;
    auto x = embed_impl(self, t, ids, segs, train);
    x = encode_impl(self, t, x, segs, train, nullptr);
    r.tokens = x;

    auto u = num::tanh(num::add(num::matmul(x, self.bind(t, "word_attn.w")), self.bind(t, "word_attn.b")));
    r.word_alpha = num::segment_softmax(num::matmul(u, self.bind(t, "word_attn.u")), segs);
    auto sent = num::segment_weighted_sum(r.word_alpha, x, segs);
    sent = maybe_dropout(self, sent, train);

    auto hs = gru_sequence(self, t, "gru_fwd", sent);
    if (self.cfg_.bidirectional_sentence_gru) {
      auto hb = num::reverse_rows(gru_sequence(self, t, "gru_bwd", num::reverse_rows(sent)));
      hs = num::concat(std::vector<Var<T>>{hs, hb}, 1);
    }
    auto us = num::tanh(num::add(num::matmul(hs, self.bind(t, "sent_attn.w")), self.bind(t, "sent_attn.b")));
    r.sentence_alpha = num::softmax(num::matmul(us, self.bind(t, "sent_attn.u")), 0);
    auto doc = num::segment_weighted_sum(r.sentence_alpha, hs, {{0, hs.value().rows()}});
    doc = maybe_dropout(self, doc, train);
    r.logits = num::add(num::matmul(doc, self.bind(t, "classifier.w")), self.bind(t, "classifier.b"));
    return r;
  }

  template <typename Self>
  static Var<T> maybe_dropout(Self& self, Var<T> x, bool train) {
    if (!train || self.cfg_.dropout_rate <= 0.0) return x;
    if constexpr (std::is_const_v<Self>) {
      return x;
    } else {
      std::vector<unsigned char> keep(x.value().size());
      for (auto& k : keep) k = self.dropout_rng_.bernoulli(1.0 - self.cfg_.dropout_rate) ? 1 : 0;
      return num::dropout(x, keep, static_cast<T>(self.cfg_.dropout_rate));
    }
  }

  void add_xavier(const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor<T> w(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(init_rng_.uniform(-a, a));
    params_.add(name, std::move(w));
  }
  void add_normal(const std::string& name, std::size_t rows, std::size_t cols, double sd) {
    Tensor<T> w(rows, cols);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(init_rng_.normal(0.0, sd));
    params_.add(name, std::move(w));
  }
  void add_const(const std::string& name, std::size_t rows, std::size_t cols, T v) {
    params_.add(name, Tensor<T>(rows, cols, v));
  }

  void init() {
    init_rng_ = Rng(cfg_.seed);
    const std::size_t d = cfg_.embed_dim, H = cfg_.gru_hidden;
    add_normal("embedding", cfg_.vocab_size, d, 0.02);
    if (cfg_.encoder == EncoderKind::TinyTransformer) {
      add_normal("pos_embedding", cfg_.max_positions, d, 0.02);
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "enc." + std::to_string(l);
        add_xavier(p + ".wqkv", d, 3 * d);
        add_const(p + ".bqkv", 1, 3 * d, T{0});
        add_xavier(p + ".wo", d, d);
        add_const(p + ".bo", 1, d, T{0});
        add_const(p + ".ln1.g", 1, d, T{1});
        add_const(p + ".ln1.b", 1, d, T{0});
        add_xavier(p + ".w1", d, cfg_.ff_dim);
        add_const(p + ".b1", 1, cfg_.ff_dim, T{0});
        add_xavier(p + ".w2", cfg_.ff_dim, d);
        add_const(p + ".b2", 1, d, T{0});
        add_const(p + ".ln2.g", 1, d, T{1});
        add_const(p + ".ln2.b", 1, d, T{0});
      }
      add_const("mlm.bias", 1, cfg_.vocab_size, T{0});
    }
    add_xavier("word_attn.w", d, cfg_.word_attn_dim);
    add_const("word_attn.b", 1, cfg_.word_attn_dim, T{0});
    add_xavier("word_attn.u", cfg_.word_attn_dim, 1);
    for (const char* dir : {"gru_fwd", "gru_bwd"}) {
      if (std::string(dir) == "gru_bwd" && !cfg_.bidirectional_sentence_gru) break;
      const std::string p = dir;
      for (const char* g : {"z", "r", "h"}) add_xavier(p + ".w_" + g, d, H);
      for (const char* g : {"z", "r", "h"}) add_xavier(p + ".u_" + g, H, H);
      for (const char* g : {"z", "r", "h"}) add_const(p + ".b_" + g, 1, H, T{0});
    }
    const std::size_t sd = cfg_.sentence_dim();
    add_xavier("sent_attn.w", sd, cfg_.sent_attn_dim);
    add_const("sent_attn.b", 1, cfg_.sent_attn_dim, T{0});
    add_xavier("sent_attn.u", cfg_.sent_attn_dim, 1);
    add_xavier("classifier.w", sd, cfg_.n_classes);
    add_const("classifier.b", 1, cfg_.n_classes, T{0});
  }

  ModelConfig cfg_;
  num::ParameterSet<T> params_;
  Rng init_rng_;
  Rng dropout_rng_;
};

/// True for parameters that belong to the token encoder and are shared
/// with masked-language-model pretraining.
inline bool is_encoder_parameter(std::string_view name) {
  return name == "embedding" || name == "pos_embedding" || name.rfind("enc.", 0) == 0 || name == "mlm.bias";
}

}  // namespace oncoabs::model
