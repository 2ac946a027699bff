#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oncoabs/baselines/ontology.hpp"
#include "oncoabs/common/error.hpp"
#include "oncoabs/common/hash.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/model/checkpoint.hpp"
#include "oncoabs/numcore/adam.hpp"
#include "oncoabs/textproc/normalize.hpp"

namespace oncoabs::baselines {

inline constexpr std::uint32_t kBowCountCap = 255;

/// Word -> occurrence count, saturating at kBowCountCap.
using WordCounts = std::map<std::string, std::uint32_t>;

inline bool edge_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '(' || c == ')' || c == '"' || c == '\'' || c == '!' ||
         c == '?';
}

/// Whitespace words of the normalized texts, with edge punctuation trimmed.
inline WordCounts word_counts(const std::vector<std::string_view>& texts) {
  WordCounts out;
  for (auto raw : texts) {
    const std::string t = text::normalize(raw);
    std::size_t i = 0;
    while (i < t.size()) {
      std::size_t j = t.find(' ', i);
      if (j == std::string::npos) j = t.size();
      std::size_t b = i, e = j;
      while (b < e && edge_punct(t[b])) ++b;
      while (e > b && edge_punct(t[e - 1])) --e;
      if (b < e) {
        auto& c = out[t.substr(b, e - b)];
        if (c < kBowCountCap) ++c;
      }
      i = j + 1;
    }
  }
  return out;
}

struct BowExample {
  std::string patient_id;
  WordCounts words;
  std::size_t label = 0;
};

/// One example per registry patient with documents in the window.
inline std::vector<BowExample> bow_examples(const std::vector<corpus::Patient>& patients, const corpus::LabelSpace& space,
                                            text::Window window, corpus::KindSet kinds) {
  std::vector<BowExample> out;
  for (const auto& p : patients) {
    if (!p.registry) continue;
    const auto idx = space.index_of(p.registry->label(space.attribute));
    if (!idx) throw FormatError("patient " + p.patient_id + " has a label outside the label space");
    const auto docs = window_documents(p, window, p.registry->diagnosis_date, kinds);
    if (docs.empty()) continue;
    std::vector<std::string_view> texts;
    for (const auto* d : docs) texts.push_back(d->text);
    out.push_back({p.patient_id, word_counts(texts), *idx});
  }
  return out;
}

struct BowConfig {
  std::size_t iterations = 300;  // full-batch Adam steps
  double lr = 0.05;
  double l2 = 1e-4;
  std::size_t min_examples = 2;  // a word must occur in this many training examples
  std::size_t max_words = 50000;
  double init_sd = 0.0;  // 0 starts from all-zero weights
  std::uint64_t seed = 1;

  void validate() const {
    if (iterations == 0) throw ConfigError("iterations", "must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
    if (l2 < 0.0) throw ConfigError("l2", "must be non-negative");
    if (max_words == 0) throw ConfigError("max_words", "must be at least 1");
  }
};

struct BowModel {
  std::string attribute;
  std::vector<std::string> labels;
  std::vector<std::string> words;  // sorted
  num::Tensor<double> weights;     // words × classes
  num::Tensor<double> bias;        // 1 × classes

  std::size_t n_classes() const { return labels.size(); }

  std::optional<std::size_t> word_index(std::string_view w) const {
    auto it = std::lower_bound(words.begin(), words.end(), w);
    if (it == words.end() || *it != w) return std::nullopt;
    return static_cast<std::size_t>(it - words.begin());
  }

  void check() const {
    if (weights.rows() != words.size() || weights.cols() != labels.size() || bias.rows() != 1 ||
        bias.cols() != labels.size())
      throw DimensionError("bow weights do not match vocabulary and label space");
  }
};

namespace detail {

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

inline SparseRow featurize(const BowModel& m, const WordCounts& w) {
  SparseRow r;
  for (const auto& [word, c] : w)
    if (auto i = m.word_index(word)) r.emplace_back(static_cast<std::uint32_t>(*i), static_cast<double>(c));
  return r;
}

inline std::vector<double> softmax_scores(const BowModel& m, const SparseRow& x) {
  const std::size_t c = m.n_classes();
  std::vector<double> z(m.bias.values().begin(), m.bias.values().end());
  for (const auto& [i, v] : x)
    for (std::size_t k = 0; k < c; ++k) z[k] += v * m.weights(i, k);
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& e : z) s += (e = std::exp(e - mx));
  for (auto& e : z) e /= s;
  return z;
}

inline double objective(const BowModel& m, const std::vector<SparseRow>& xs, const std::vector<BowExample>& ex,
                        double l2) {
  double loss = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) loss -= std::log(std::max(softmax_scores(m, xs[n])[ex[n].label], 1e-300));
  loss /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (double w : m.weights.values()) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

}  // namespace detail

/// Regularized training objective: mean cross-entropy + l2/2 · ||W||².
inline double bow_objective(const BowModel& m, const std::vector<BowExample>& examples, double l2) {
  std::vector<detail::SparseRow> xs;
  for (const auto& e : examples) xs.push_back(detail::featurize(m, e.words));
  return detail::objective(m, xs, examples, l2);
}

struct BowTrainResult {
  BowModel model;
  std::vector<double> objective_log;  // every 10 iterations and the last one
};

/// Multinomial logistic regression on capped word counts, full-batch Adam.
/// Weights are rounded to float32 at the end so a saved model predicts
/// identically after reload.
inline BowTrainResult bow_train(const std::vector<BowExample>& examples, const corpus::LabelSpace& space,
                                const BowConfig& cfg = {}) {
  cfg.validate();
  if (examples.empty()) throw EmptyInputError("bow: no training examples");
  std::map<std::string, std::size_t> df;
  for (const auto& e : examples) {
    if (e.label >= space.size()) throw DimensionError("bow: example label outside the label space");
    for (const auto& [w, c] : e.words) ++df[w];
  }
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [w, n] : df)
    if (n >= cfg.min_examples) ranked.emplace_back(n, w);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (ranked.size() > cfg.max_words) ranked.resize(cfg.max_words);

  BowTrainResult r;
  auto& m = r.model;
  m.attribute = std::string(corpus::name(space.attribute));
  m.labels = space.classes;
  for (auto& [n, w] : ranked) m.words.push_back(std::move(w));
  std::sort(m.words.begin(), m.words.end());
  const std::size_t c = space.size();

  num::ParameterSet<double> params;
  num::Tensor<double> w0(m.words.size(), c), b0(1, c);
  if (cfg.init_sd > 0.0) {
    Rng rng(cfg.seed);
    for (auto& v : w0.values()) v = rng.normal(0.0, cfg.init_sd);
    for (auto& v : b0.values()) v = rng.normal(0.0, cfg.init_sd);
  }
  params.add("weights", std::move(w0));
  params.add("bias", std::move(b0));
  num::AdamState<double> adam(params, {cfg.lr, 0.9, 0.999, 1e-8, 0.0});

  std::vector<detail::SparseRow> xs;
  for (const auto& e : examples) xs.push_back(detail::featurize(m, e.words));
  const double inv_n = 1.0 / static_cast<double>(examples.size());

  auto sync = [&] {
    m.weights = params[0].value;
    m.bias = params[1].value;
  };
  sync();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    params.zero_grad();
    auto& gw = params[0].grad;
    auto& gb = params[1].grad;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      auto p = detail::softmax_scores(m, xs[n]);
      p[examples[n].label] -= 1.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = p[k] * inv_n;
        gb[k] += d;
        for (const auto& [i, v] : xs[n]) gw(i, k) += v * d;
      }
    }
    const auto& wv = params[0].value;
    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += cfg.l2 * wv[k];
    num::adam_step(params, adam);
    sync();
    if (it % 10 == 9 || it + 1 == cfg.iterations) r.objective_log.push_back(detail::objective(m, xs, examples, cfg.l2));
  }
  for (auto& v : m.weights.values()) v = static_cast<double>(static_cast<float>(v));
  for (auto& v : m.bias.values()) v = static_cast<double>(static_cast<float>(v));
  return r;
}

/// Class distribution for one patient's in-window words. With no known word
/// all mass goes to "not-documented".
inline std::vector<double> bow_predict(const BowModel& m, const WordCounts& words) {
  m.check();
  const auto x = detail::featurize(m, words);
  if (x.empty()) {
    std::vector<double> p(m.n_classes(), 0.0);
    auto it = std::find(m.labels.begin(), m.labels.end(), corpus::kNotDocumented);
    if (it == m.labels.end()) throw FormatError("bow model has no not-documented class");
    p[static_cast<std::size_t>(it - m.labels.begin())] = 1.0;
    return p;
  }
  return detail::softmax_scores(m, x);
}

inline std::vector<double> bow_predict(const BowModel& m, const std::vector<std::string_view>& texts) {
  return bow_predict(m, word_counts(texts));
}

// Model file: "ONBW", u32 version, u32 header length + JSON header
// {attribute, labels, words}, then weights and bias as float32 little endian.

inline constexpr char kBowMagic[4] = {'O', 'N', 'B', 'W'};
inline constexpr std::uint32_t kBowVersion = 1;

inline std::string serialize_bow(const BowModel& m) {
  m.check();
  nlohmann::ordered_json h;
  h["attribute"] = m.attribute;
  h["labels"] = m.labels;
  h["words"] = m.words;
  const std::string hs = h.dump();
  std::string out(kBowMagic, 4);
  model::detail::put_u32(out, kBowVersion);
  model::detail::put_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  for (const auto* t : {&m.weights, &m.bias})
    for (double v : t->values()) model::detail::put_u32(out, model::detail::float_bits(static_cast<float>(v)));
  return out;
}

inline BowModel parse_bow(std::string_view bytes) {
  model::detail::Reader rd(bytes);
  if (rd.take(4) != std::string_view(kBowMagic, 4)) throw FormatError("not a bow model file (bad magic)");
  if (const auto v = rd.u32(); v != kBowVersion) throw FormatError("unsupported bow model version " + std::to_string(v));
  const auto hlen = rd.u32();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(rd.take(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bow header: ") + e.what());
  }
  BowModel m;
  m.attribute = h.at("attribute").get<std::string>();
  m.labels = h.at("labels").get<std::vector<std::string>>();
  m.words = h.at("words").get<std::vector<std::string>>();
  if (!std::is_sorted(m.words.begin(), m.words.end())) throw FormatError("bow word list is not sorted");
  m.weights = num::Tensor<double>(m.words.size(), m.labels.size());
  m.bias = num::Tensor<double>(1, m.labels.size());
  for (auto* t : {&m.weights, &m.bias})
    for (auto& v : t->values()) v = static_cast<double>(model::detail::bits_float(rd.u32()));
  if (!rd.done()) throw FormatError("trailing bytes after bow model");
  return m;
}

inline std::string bow_filename(std::string_view attribute) { return std::string(attribute) + ".bow.model"; }

inline void save_bow(const std::filesystem::path& path, const BowModel& m) { write_file(path, serialize_bow(m)); }

inline BowModel load_bow(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("bow model " + path.string(), "train --model bow");
  return parse_bow(read_file(path));
}

}  // namespace oncoabs::baselines
