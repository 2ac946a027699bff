#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/textproc/assemble.hpp"
#include "oncoabs/textproc/normalize.hpp"

namespace oncoabs::baselines {

/// Documents of `kinds` dated inside `window` around `anchor_day`.
inline std::vector<const corpus::ClinicalDocument*> window_documents(const corpus::Patient& p, text::Window window,
                                                                     int anchor_day, corpus::KindSet kinds) {
  std::vector<const corpus::ClinicalDocument*> out;
  for (const auto& d : p.documents)
    if (d.date >= anchor_day - window.days_before && d.date <= anchor_day + window.days_after && kinds.contains(d.kind))
      out.push_back(&d);
  return out;
}

namespace detail {

inline bool word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || static_cast<unsigned char>(c) >= 0x80;
}

struct AliasEntry {
  std::string alias;
  std::size_t cls;
};

}  // namespace detail

/// Alias occurrence counts per class of `space`. Matching runs over the
/// normalized text at word boundaries, longest alias first, without overlaps.
inline std::vector<std::size_t> alias_counts(const corpus::AliasLexicon& lexicon, const corpus::LabelSpace& space,
                                             const std::vector<std::string_view>& texts) {
  if (lexicon.empty()) throw ConfigError("lexicon", "alias lexicon is empty");
  std::vector<detail::AliasEntry> entries;
  for (const auto& [code, aliases] : lexicon) {
    const auto cls = space.index_of(code);
    if (!cls) continue;
    for (const auto& a : aliases) {
      auto norm = text::normalize(a);
      if (!norm.empty()) entries.push_back({std::move(norm), *cls});
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.alias.size() > b.alias.size(); });

  std::vector<std::size_t> counts(space.size(), 0);
  for (auto raw : texts) {
    const std::string t = text::normalize(raw);
    std::size_t i = 0;
    while (i < t.size()) {
      if (i > 0 && detail::word_char(t[i - 1]) && detail::word_char(t[i])) {
        ++i;
        continue;
      }
      bool hit = false;
      for (const auto& e : entries) {
        const std::size_t end = i + e.alias.size();
        if (end > t.size() || t.compare(i, e.alias.size(), e.alias) != 0) continue;
        if (end < t.size() && detail::word_char(t[end]) && detail::word_char(t[end - 1])) continue;
        ++counts[e.cls];
        i = end;
        hit = true;
        break;
      }
      if (!hit) ++i;
    }
  }
  return counts;
}

/// Rule-based prediction: alias counts normalized to a distribution over
/// `space`; with no alias found, all mass goes to "not-documented".
inline std::vector<double> ontology_predict(const corpus::AliasLexicon& lexicon, const corpus::LabelSpace& space,
                                            const std::vector<std::string_view>& texts) {
  const auto counts = alias_counts(lexicon, space, texts);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> p(space.size(), 0.0);
  if (total == 0) {
    p[space.not_documented_index()] = 1.0;
    return p;
  }
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return p;
}

inline std::vector<double> ontology_predict(const corpus::AliasLexicon& lexicon, const corpus::LabelSpace& space,
                                            const std::vector<const corpus::ClinicalDocument*>& docs) {
  std::vector<std::string_view> texts;
  texts.reserve(docs.size());
  for (const auto* d : docs) texts.push_back(d->text);
  return ontology_predict(lexicon, space, texts);
}

}  // namespace oncoabs::baselines
