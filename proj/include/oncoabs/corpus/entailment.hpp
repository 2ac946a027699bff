#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "oncoabs/corpus/types.hpp"

namespace oncoabs::corpus {

/// Template semantics of planted facts. A value is entailed by a set of facts
/// when one asserts it, or, for Site only, when a location fact names it and
/// some fact confirms malignancy.
inline bool facts_entail(std::span<const Fact> facts, AttributeKind attribute, std::string_view code) {
  bool location = false;
  bool malignancy = false;
  for (const auto& f : facts) {
    if (f.attribute != attribute) continue;
    if (f.role == FactRole::Asserted && f.code == code) return true;
    if (attribute == AttributeKind::Site) {
      location |= f.role == FactRole::Location && f.code == code;
      malignancy |= f.role == FactRole::Malignancy;
    }
  }
  return location && malignancy;
}

inline std::vector<Fact> document_facts(const PlantedDocument& doc) {
  std::vector<Fact> out;
  for (const auto& s : doc.sentences) out.insert(out.end(), s.facts.begin(), s.facts.end());
  return out;
}

inline bool document_entails(const PlantedDocument& doc, AttributeKind attribute, std::string_view code) {
  return facts_entail(document_facts(doc), attribute, code);
}

/// Entailment by the union of several documents.
inline bool union_entails(std::span<const PlantedDocument* const> docs, AttributeKind attribute, std::string_view code) {
  std::vector<Fact> all;
  for (const auto* d : docs) {
    auto f = document_facts(*d);
    all.insert(all.end(), f.begin(), f.end());
  }
  return facts_entail(all, attribute, code);
}

/// True when a fact asserts or confirms malignancy, which no control may carry.
inline bool is_positive_malignancy(const Fact& f) {
  return (f.attribute == AttributeKind::Site || f.attribute == AttributeKind::Histology) &&
         (f.role == FactRole::Asserted || f.role == FactRole::Malignancy);
}

}  // namespace oncoabs::corpus
