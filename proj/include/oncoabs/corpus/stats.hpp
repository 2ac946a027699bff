#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/generator.hpp"
#include "oncoabs/textproc/assemble.hpp"

namespace oncoabs::corpus {

struct CorpusStats {
  std::size_t n_patients = 0;
  std::size_t n_registry = 0;
  std::size_t n_control = 0;
  std::map<DocumentKind, std::size_t> documents_by_kind;
  std::array<std::map<std::string, std::size_t>, kAttributeCount> label_histograms;
  std::vector<std::size_t> assembled_lengths;  // one per cancer patient with a non-empty window
  double median_assembled_length = 0.0;
  std::string length_unit = "tokens";
};

inline double median(std::vector<std::size_t> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? static_cast<double>(v[n / 2]) : 0.5 * static_cast<double>(v[n / 2 - 1] + v[n / 2]);
}

/// Summary counts. Lengths are subword tokens of the assembled diagnosis
/// window when `vocab` is given, whitespace words otherwise.
inline CorpusStats corpus_stats(const std::vector<Patient>& patients, const text::Vocab* vocab = nullptr,
                                text::Window window = {30, 30}) {
  if (patients.empty()) throw EmptyInputError("corpus has no patients");
  CorpusStats s;
  s.n_patients = patients.size();
  for (auto k : kAllDocumentKinds) s.documents_by_kind[k] = 0;
  for (const auto& p : patients) {
    for (const auto& d : p.documents) ++s.documents_by_kind[d.kind];
    if (!p.registry) {
      ++s.n_control;
      continue;
    }
    ++s.n_registry;
    for (auto a : kAllAttributes) ++s.label_histograms[index(a)][p.registry->label(a)];
    const int dx = p.registry->diagnosis_date;
    if (vocab) {
      try {
        s.assembled_lengths.push_back(text::assemble_input(p, window, dx, KindSet::all(), *vocab).size());
      } catch (const EmptyInputError&) {
      }
    } else {
      std::size_t words = 0;
      bool any = false;
      for (const auto& d : p.documents) {
        if (d.date < dx - window.days_before || d.date > dx + window.days_after) continue;
        any = true;
        bool in_word = false;
        for (char c : d.text) {
          const bool sp = text::is_space(c);
          if (!sp && !in_word) ++words;
          in_word = !sp;
        }
      }
      if (any) s.assembled_lengths.push_back(words);
    }
  }
  s.length_unit = vocab ? "tokens" : "words";
  s.median_assembled_length = median(s.assembled_lengths);
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["n_patients"] = s.n_patients;
  j["n_registry"] = s.n_registry;
  j["n_control"] = s.n_control;
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (const auto& [k, n] : s.documents_by_kind) kinds[std::string(name(k))] = n;
  j["documents_by_kind"] = kinds;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (auto a : kAllAttributes) {
    nlohmann::ordered_json h = nlohmann::ordered_json::object();
    for (const auto& [code, n] : s.label_histograms[index(a)]) h[code] = n;
    hist[std::string(name(a))] = h;
  }
  j["label_histograms"] = hist;
  j["median_assembled_length"] = s.median_assembled_length;
  j["length_unit"] = s.length_unit;
  if (!s.assembled_lengths.empty()) {
    j["min_assembled_length"] = *std::min_element(s.assembled_lengths.begin(), s.assembled_lengths.end());
    j["max_assembled_length"] = *std::max_element(s.assembled_lengths.begin(), s.assembled_lengths.end());
  }
  return j;
}

}  // namespace oncoabs::corpus
