#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/hash.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/textproc/assemble.hpp"

namespace oncoabs::train {

/// A patient id appears in more than one of train/dev/test.
class LeakageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AbstractionExample {
  std::string patient_id;
  text::TokenSequence tokens;
  std::size_t label = 0;
  corpus::AttributeKind attribute = corpus::AttributeKind::Site;
};

struct AbstractionDataset {
  corpus::AttributeKind attribute = corpus::AttributeKind::Site;
  std::vector<AbstractionExample> examples;
  std::size_t skipped_empty = 0;
};

/// One example per registry patient: documents of `kinds` inside `window`
/// around the diagnosis date, labeled with the registry value. Patients with
/// nothing in the window are skipped and counted.
inline AbstractionDataset build_abstraction_dataset(const std::vector<corpus::Patient>& patients,
                                                    const corpus::LabelSpace& space, text::Window window,
                                                    corpus::KindSet kinds, const text::Vocab& vocab,
                                                    std::size_t max_sentences = text::kDefaultMaxSentences) {
  AbstractionDataset ds;
  ds.attribute = space.attribute;
  for (const auto& p : patients) {
    if (!p.registry) continue;
    const auto& code = p.registry->label(space.attribute);
    const auto idx = space.index_of(code);
    if (!idx)
      throw FormatError("patient " + p.patient_id + " has " + std::string(corpus::name(space.attribute)) + " label '" +
                        code + "' outside the label space");
    try {
      auto seq = text::assemble_input(p, window, p.registry->diagnosis_date, kinds, vocab, max_sentences,
                                      space.attribute);
      ds.examples.push_back({p.patient_id, std::move(seq), *idx, space.attribute});
    } catch (const EmptyInputError&) {
      ++ds.skipped_empty;
    }
  }
  if (ds.examples.empty())
    throw EmptyInputError("no abstraction examples (" + std::to_string(ds.skipped_empty) +
                          " registry patients had empty windows)");
  return ds;
}

enum class NegativeKind { None, Control, Hard };

inline std::string_view name(NegativeKind k) {
  switch (k) {
    case NegativeKind::None: return "none";
    case NegativeKind::Control: return "control";
    case NegativeKind::Hard: return "hard";
  }
  return "?";
}

inline constexpr std::size_t kNegative = 0;
inline constexpr std::size_t kPositive = 1;

struct CaseFindingExample {
  std::string patient_id;
  int day = 0;
  text::TokenSequence tokens;
  std::size_t label = kNegative;
  NegativeKind negative_kind = NegativeKind::None;
};

struct CaseFindingScheme {
  enum class Kind { Default, HardNegatives };
  Kind kind = Kind::Default;
  int hard_cutoff_days = 30;
  std::size_t per_patient_max = 1;         // hard negatives per registry patient
  std::size_t control_days_per_patient = 3;

  static CaseFindingScheme parse(std::string_view s) {
    CaseFindingScheme c;
    if (s == "default") c.kind = Kind::Default;
    else if (s == "hard-negatives") c.kind = Kind::HardNegatives;
    else throw ConfigError("scheme", "unknown scheme '" + std::string(s) + "' (default|hard-negatives)");
    return c;
  }
  std::string_view tag() const { return kind == Kind::Default ? "default" : "hard-negatives"; }
};

/// Distinct days carrying at least one document of `kinds`, ascending.
inline std::vector<int> document_days(const corpus::Patient& p, corpus::KindSet kinds = corpus::KindSet::all()) {
  std::set<int> days;
  for (const auto& d : p.documents)
    if (kinds.contains(d.kind)) days.insert(d.date);
  return {days.begin(), days.end()};
}

/// The documents of one day, assembled as a model input.
inline text::TokenSequence day_input(const corpus::Patient& p, int day, corpus::KindSet kinds, const text::Vocab& vocab,
                                     std::size_t max_sentences = text::kDefaultMaxSentences) {
  return text::assemble_input(p, {0, 0}, day, kinds, vocab, max_sentences);
}

namespace detail {

inline std::vector<int> sample_days(std::vector<int> days, std::size_t k, Rng& rng) {
  for (std::size_t i = days.size(); i > 1; --i) std::swap(days[i - 1], days[rng.below(i)]);
  if (days.size() > k) days.resize(k);
  std::sort(days.begin(), days.end());
  return days;
}

}  // namespace detail

struct CaseFindingDataset {
  CaseFindingScheme scheme;
  std::vector<CaseFindingExample> examples;
  std::size_t n_positive = 0, n_control_negative = 0, n_hard_negative = 0;
};

/// Positives: registry patients on their diagnosis day. Negatives: sampled
/// document days of control patients, plus, for the hard-negative scheme,
/// sampled registry-patient days strictly before diagnosis - hard_cutoff.
inline CaseFindingDataset build_casefinding_dataset(const std::vector<corpus::Patient>& patients,
                                                    const CaseFindingScheme& scheme, std::uint64_t seed,
                                                    const text::Vocab& vocab,
                                                    corpus::KindSet kinds = corpus::KindSet::all(),
                                                    std::size_t max_sentences = text::kDefaultMaxSentences) {
  if (scheme.hard_cutoff_days < 0) throw ConfigError("hard_cutoff_days", "must be non-negative");
  if (scheme.control_days_per_patient == 0) throw ConfigError("control_days_per_patient", "must be at least 1");
  if (scheme.kind == CaseFindingScheme::Kind::HardNegatives && scheme.per_patient_max == 0)
    throw ConfigError("per_patient_max", "must be at least 1");
  Rng rng(seed);
  CaseFindingDataset ds;
  ds.scheme = scheme;
  std::size_t controls = 0, control_days = 0, registry = 0, hard_days = 0;
  for (const auto& p : patients) {
    const auto days = document_days(p, kinds);
    if (p.registry) {
      ++registry;
      const int dx = p.registry->diagnosis_date;
      if (std::binary_search(days.begin(), days.end(), dx)) {
        ds.examples.push_back({p.patient_id, dx, day_input(p, dx, kinds, vocab, max_sentences), kPositive,
                               NegativeKind::None});
        ++ds.n_positive;
      }
      if (scheme.kind != CaseFindingScheme::Kind::HardNegatives) continue;
      std::vector<int> early;
      for (int d : days)
        if (d < dx - scheme.hard_cutoff_days) early.push_back(d);
      hard_days += early.size();
      for (int d : detail::sample_days(early, scheme.per_patient_max, rng)) {
        ds.examples.push_back({p.patient_id, d, day_input(p, d, kinds, vocab, max_sentences), kNegative,
                               NegativeKind::Hard});
        ++ds.n_hard_negative;
      }
    } else {
      ++controls;
      control_days += days.size();
      for (int d : detail::sample_days(days, scheme.control_days_per_patient, rng)) {
        ds.examples.push_back({p.patient_id, d, day_input(p, d, kinds, vocab, max_sentences), kNegative,
                               NegativeKind::Control});
        ++ds.n_control_negative;
      }
    }
  }
  if (ds.n_positive == 0)
    throw EmptyInputError("case finding: no positive days among " + std::to_string(registry) + " registry patients");
  if (ds.n_control_negative == 0)
    throw EmptyInputError("case finding: no control negatives (" + std::to_string(controls) + " control patients, " +
                          std::to_string(control_days) + " document days)");
  if (scheme.kind == CaseFindingScheme::Kind::HardNegatives && ds.n_hard_negative == 0)
    throw EmptyInputError("case finding: no hard-negative days before diagnosis - " +
                          std::to_string(scheme.hard_cutoff_days) + " among " + std::to_string(registry) +
                          " registry patients");
  return ds;
}

/// Throws LeakageError when any patient id occurs in two of the sets.
template <typename... Sets>
void check_disjoint(const Sets&... sets) {
  std::map<std::string, std::size_t> owner;
  std::size_t k = 0;
  auto visit = [&](const auto& set) {
    for (const auto& e : set) {
      auto [it, fresh] = owner.emplace(e.patient_id, k);
      if (!fresh && it->second != k)
        throw LeakageError("patient " + e.patient_id + " appears in split " + std::to_string(it->second) +
                           " and split " + std::to_string(k));
    }
    ++k;
  };
  (visit(sets), ...);
}

/// Cache key for a dataset built from (corpus, attribute, window, kinds, vocab).
inline std::string dataset_cache_key(std::uint64_t corpus_hash, std::string_view attribute, text::Window window,
                                     corpus::KindSet kinds, std::uint64_t vocab_hash) {
  Fnv1a h;
  h.update(hex64(corpus_hash)).update("|").update(attribute).update("|").update(text::to_string(window));
  h.update("|").update(kinds.to_string()).update("|").update(hex64(vocab_hash));
  return hex64(h.digest());
}

inline nlohmann::ordered_json to_json(const AbstractionExample& e) {
  nlohmann::ordered_json j;
  j["patient_id"] = e.patient_id;
  j["attribute"] = std::string(corpus::name(e.attribute));
  j["label"] = e.label;
  j["ids"] = e.tokens.ids;
  nlohmann::ordered_json s = nlohmann::ordered_json::array();
  for (const auto& [b, en] : e.tokens.sentences) s.push_back({b, en});
  j["sentences"] = s;
  return j;
}

}  // namespace oncoabs::train
