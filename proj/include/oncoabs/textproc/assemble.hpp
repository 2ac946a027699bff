#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/textproc/normalize.hpp"
#include "oncoabs/textproc/sentences.hpp"
#include "oncoabs/textproc/tokenize.hpp"
#include "oncoabs/textproc/vocab.hpp"

namespace oncoabs::text {

inline constexpr std::size_t kMaxSentenceTokens = 64;  // including the closing [SEP]
inline constexpr std::size_t kDefaultMaxSentences = 256;
inline constexpr std::uint32_t kNoDocument = std::numeric_limits<std::uint32_t>::max();

/// Days relative to the anchor: documents dated in
/// [anchor - days_before, anchor + days_after] are selected.
struct Window {
  int days_before = 30;
  int days_after = 30;
  bool operator==(const Window&) const = default;
};

/// Parses "-30:90" (the leading sign on the first number is optional).
inline Window parse_window(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("window must look like -30:30");
  try {
    int a = std::stoi(std::string(s.substr(0, colon)));
    int b = std::stoi(std::string(s.substr(colon + 1)));
    if (a > 0) a = -a;
    if (b < a) throw std::invalid_argument("window end before start");
    return {-a, b};
  } catch (const std::logic_error&) {
    throw std::invalid_argument("window must look like -30:30, got '" + std::string(s) + "'");
  }
}

inline std::string to_string(const Window& w) { return std::to_string(-w.days_before) + ":" + std::to_string(w.days_after); }

struct TokenProvenance {
  std::uint32_t doc_index = kNoDocument;  // index into TokenSequence::doc_ids
  std::size_t char_start = 0;             // source byte range; empty for special tokens
  std::size_t char_end = 0;
};

struct SentenceSource {
  std::uint32_t doc_index = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

/// Assembled model input. Layout: [CLS], then per document its kind marker
/// followed by its sentences, each closed by [SEP]. A sentence segment covers
/// the sentence tokens and its [SEP]; [CLS] and markers lie outside segments.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::pair<std::size_t, std::size_t>> sentences;  // [begin, end) into ids
  std::vector<TokenProvenance> provenance;                     // one per id
  std::vector<SentenceSource> sentence_sources;                // one per sentence
  std::vector<std::string> doc_ids;
  std::vector<int> doc_dates;
  std::vector<corpus::DocumentKind> doc_kinds;
  int window_start = 0;  // absolute days, inclusive
  int window_end = 0;
  std::optional<corpus::AttributeKind> attribute;
  std::size_t dropped_sentences = 0;

  std::size_t sentence_count() const noexcept { return sentences.size(); }
  std::size_t size() const noexcept { return ids.size(); }
};

inline TokenId kind_marker(corpus::DocumentKind k) {
  switch (k) {
    case corpus::DocumentKind::Pathology: return kPathMarker;
    case corpus::DocumentKind::Radiology: return kRadMarker;
    case corpus::DocumentKind::Operative: return kOpMarker;
  }
  return kUnk;
}

/// One tokenized sentence of a document, before assembly.
struct TokenizedSentence {
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::vector<Token> tokens;  // offsets in source coordinates
};

/// Splits and tokenizes a document; each sentence keeps at most
/// kMaxSentenceTokens - 1 tokens (tail truncation).
inline std::vector<TokenizedSentence> tokenize_document(const Vocab& vocab, std::string_view text) {
  const NormalizedText norm = normalize_with_offsets(text);
  std::vector<TokenizedSentence> out;
  for (const auto& span : split_sentences(norm.text)) {
    TokenizedSentence ts;
    std::tie(ts.char_start, ts.char_end) = norm.to_source(span.char_start, span.char_end);
    auto toks = tokenize_normalized(vocab, std::string_view(norm.text).substr(span.char_start, span.char_end - span.char_start),
                                    span.char_start);
    if (toks.size() > kMaxSentenceTokens - 1) toks.resize(kMaxSentenceTokens - 1);
    for (auto& t : toks) std::tie(t.begin, t.end) = norm.to_source(t.begin, t.end);
    ts.tokens = std::move(toks);
    if (!ts.tokens.empty()) out.push_back(std::move(ts));
  }
  return out;
}

/// Builds the model input for documents of `kinds` dated inside `window`
/// around `anchor_day`. Keeps the newest `max_sentences` sentences.
inline TokenSequence assemble_input(const corpus::Patient& patient, Window window, int anchor_day, corpus::KindSet kinds,
                                    const Vocab& vocab, std::size_t max_sentences = kDefaultMaxSentences,
                                    std::optional<corpus::AttributeKind> attribute = std::nullopt) {
  if (max_sentences < 1) throw ConfigError("max_sentences", "must be at least 1");
  TokenSequence seq;
  seq.window_start = anchor_day - window.days_before;
  seq.window_end = anchor_day + window.days_after;
  seq.attribute = attribute;

  std::vector<const corpus::ClinicalDocument*> docs;
  for (const auto& d : patient.documents)
    if (d.date >= seq.window_start && d.date <= seq.window_end && kinds.contains(d.kind)) docs.push_back(&d);
  if (docs.empty())
    throw EmptyInputError("patient " + patient.patient_id + " has no documents in window [" +
                          std::to_string(seq.window_start) + ", " + std::to_string(seq.window_end) + "]");
  std::stable_sort(docs.begin(), docs.end(), [](const auto* a, const auto* b) {
    return std::tie(a->date, a->doc_id) < std::tie(b->date, b->doc_id);
  });

  std::vector<std::vector<TokenizedSentence>> per_doc;
  std::size_t total = 0;
  for (const auto* d : docs) {
    per_doc.push_back(tokenize_document(vocab, d->text));
    total += per_doc.back().size();
  }
  std::size_t skip = total > max_sentences ? total - max_sentences : 0;
  seq.dropped_sentences = skip;

  seq.ids.push_back(kCls);
  seq.provenance.push_back({});
  for (std::size_t k = 0; k < docs.size(); ++k) {
    auto& sents = per_doc[k];
    const std::size_t first = std::min(skip, sents.size());
    skip -= first;
    if (first == sents.size()) continue;
    const auto doc_index = static_cast<std::uint32_t>(seq.doc_ids.size());
    seq.doc_ids.push_back(docs[k]->doc_id);
    seq.doc_dates.push_back(docs[k]->date);
    seq.doc_kinds.push_back(docs[k]->kind);
    seq.ids.push_back(kind_marker(docs[k]->kind));
    seq.provenance.push_back({doc_index, 0, 0});
    for (std::size_t s = first; s < sents.size(); ++s) {
      const std::size_t begin = seq.ids.size();
      for (const auto& t : sents[s].tokens) {
        seq.ids.push_back(t.id);
        seq.provenance.push_back({doc_index, t.begin, t.end});
      }
      seq.ids.push_back(kSep);
      seq.provenance.push_back({doc_index, 0, 0});
      seq.sentences.emplace_back(begin, seq.ids.size());
      seq.sentence_sources.push_back({doc_index, sents[s].char_start, sents[s].char_end});
    }
  }
  return seq;
}

}  // namespace oncoabs::text
