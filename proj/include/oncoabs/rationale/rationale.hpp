#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/model/han.hpp"
#include "oncoabs/textproc/assemble.hpp"

namespace oncoabs::rationale {

inline constexpr std::size_t kTokensPerSentence = 3;

struct TokenHighlight {
  std::size_t position = 0;  // index into TokenSequence::ids
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  double word_weight = 0.0;  // word attention inside its sentence
  double combined = 0.0;     // sentence α × word α, renormalized over all returned tokens
};

struct RationaleEntry {
  std::size_t sentence = 0;  // index into TokenSequence::sentences
  std::string doc_id;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  double weight = 0.0;  // sentence attention
  std::vector<TokenHighlight> tokens;
  std::string snippet;  // filled by attach_text
};

struct Rationale {
  std::size_t k = 0;
  std::vector<RationaleEntry> entries;  // sentence weight non-increasing
};

namespace detail {

// Indices of `w` by descending value, ties by ascending index.
inline std::vector<std::size_t> ranked(const std::vector<double>& w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  return idx;
}

}  // namespace detail

/// Top-k sentences by sentence attention, each with its top word-attention
/// tokens. Special tokens ([SEP]) are never highlighted. Ties go to the
/// earlier position.
inline Rationale extract_rationale(const model::Prediction& pred, const text::TokenSequence& seq, std::size_t k,
                                   std::size_t tokens_per_sentence = kTokensPerSentence) {
  if (k < 1) throw ConfigError("k", "must be at least 1");
  if (pred.sentence_attention.size() != seq.sentence_count() || pred.word_attention.size() != seq.sentence_count())
    throw DimensionError("prediction does not belong to this token sequence");
  Rationale r;
  r.k = k;
  double total = 0.0;
  for (std::size_t s : detail::ranked(pred.sentence_attention)) {
    if (r.entries.size() == k) break;
    const auto [b, e] = seq.sentences[s];
    const auto& wa = pred.word_attention[s];
    if (wa.size() != e - b) throw DimensionError("word attention length does not match sentence " + std::to_string(s));
    const auto& src = seq.sentence_sources[s];
    RationaleEntry entry{s, seq.doc_ids[src.doc_index], src.char_start, src.char_end, pred.sentence_attention[s], {}, {}};
    for (std::size_t j : detail::ranked(wa)) {
      if (entry.tokens.size() == tokens_per_sentence) break;
      const auto& pv = seq.provenance[b + j];
      if (pv.char_end <= pv.char_start) continue;
      const double c = entry.weight * wa[j];
      entry.tokens.push_back({b + j, pv.char_start, pv.char_end, wa[j], c});
      total += c;
    }
    r.entries.push_back(std::move(entry));
  }
  for (auto& en : r.entries)
    for (auto& t : en.tokens) t.combined = total > 0.0 ? t.combined / total : 0.0;
  return r;
}

/// Resolves every span against the document texts (looked up by doc id) and
/// fills the snippets. Throws FormatError when a span falls outside its document.
inline void attach_text(Rationale& r, const std::function<std::optional<std::string_view>(const std::string&)>& doc_text) {
  for (auto& e : r.entries) {
    const auto text = doc_text(e.doc_id);
    if (!text) throw FormatError("rationale references unknown document " + e.doc_id);
    if (e.char_end > text->size() || e.char_start > e.char_end)
      throw FormatError("rationale span outside document " + e.doc_id);
    for (const auto& t : e.tokens)
      if (t.char_start < e.char_start || t.char_end > e.char_end)
        throw FormatError("token highlight outside its sentence in " + e.doc_id);
    e.snippet = std::string(text->substr(e.char_start, e.char_end - e.char_start));
  }
}

inline void attach_text(Rationale& r, const corpus::Patient& p) {
  attach_text(r, [&](const std::string& id) -> std::optional<std::string_view> {
    for (const auto& d : p.documents)
      if (d.doc_id == id) return std::string_view(d.text);
    return std::nullopt;
  });
}

/// True when every entry's snippet equals its span of the document text.
inline bool spans_verified(const Rationale& r, const corpus::Patient& p) {
  for (const auto& e : r.entries) {
    const corpus::ClinicalDocument* doc = nullptr;
    for (const auto& d : p.documents)
      if (d.doc_id == e.doc_id) doc = &d;
    if (!doc || e.char_end > doc->text.size()) return false;
    if (doc->text.compare(e.char_start, e.char_end - e.char_start, e.snippet) != 0) return false;
  }
  return true;
}

/// Whether the span [start, end) of `doc_id` overlaps an evidence span for `attribute`.
inline bool hits_evidence(const std::vector<corpus::EvidenceSpan>& evidence, corpus::AttributeKind attribute,
                          const std::string& doc_id, std::size_t start, std::size_t end) {
  for (const auto& ev : evidence)
    if (ev.attribute == attribute && ev.doc_id == doc_id && start < ev.char_end && ev.char_start < end) return true;
  return false;
}

inline nlohmann::ordered_json to_json(const Rationale& r) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  nlohmann::ordered_json es = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    nlohmann::ordered_json x;
    x["doc_id"] = e.doc_id;
    x["char_start"] = e.char_start;
    x["char_end"] = e.char_end;
    x["weight"] = e.weight;
    x["snippet"] = e.snippet;
    nlohmann::ordered_json ts = nlohmann::ordered_json::array();
    for (const auto& t : e.tokens)
      ts.push_back({{"char_start", t.char_start}, {"char_end", t.char_end}, {"word_weight", t.word_weight},
                    {"combined", t.combined}});
    x["tokens"] = ts;
    es.push_back(x);
  }
  j["entries"] = es;
  return j;
}

}  // namespace oncoabs::rationale
