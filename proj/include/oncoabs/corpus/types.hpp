#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oncoabs/common/error.hpp"

namespace oncoabs::corpus {

enum class AttributeKind : std::uint8_t { Site, Histology, ClinicalT, ClinicalN, ClinicalM, PathT, PathN, PathM };

inline constexpr std::size_t kAttributeCount = 8;

inline constexpr std::array<AttributeKind, kAttributeCount> kAllAttributes = {
    AttributeKind::Site,      AttributeKind::Histology, AttributeKind::ClinicalT, AttributeKind::ClinicalN,
    AttributeKind::ClinicalM, AttributeKind::PathT,     AttributeKind::PathN,     AttributeKind::PathM};

inline constexpr std::array<std::string_view, kAttributeCount> kAttributeNames = {
    "Site", "Histology", "ClinicalT", "ClinicalN", "ClinicalM", "PathT", "PathN", "PathM"};

/// Command-line spelling of each attribute.
inline constexpr std::array<std::string_view, kAttributeCount> kAttributeSlugs = {
    "site", "histology", "clinical-t", "clinical-n", "clinical-m", "path-t", "path-n", "path-m"};

inline std::size_t index(AttributeKind a) { return static_cast<std::size_t>(a); }
inline std::string_view name(AttributeKind a) { return kAttributeNames[index(a)]; }
inline std::string_view slug(AttributeKind a) { return kAttributeSlugs[index(a)]; }

/// Accepts either the type name ("PathT") or the slug ("path-t").
inline AttributeKind parse_attribute(std::string_view s) {
  for (std::size_t i = 0; i < kAttributeCount; ++i)
    if (s == kAttributeNames[i] || s == kAttributeSlugs[i]) return kAllAttributes[i];
  throw std::invalid_argument("unknown attribute '" + std::string(s) + "'");
}

inline std::optional<AttributeKind> try_parse_attribute(std::string_view s) {
  for (std::size_t i = 0; i < kAttributeCount; ++i)
    if (s == kAttributeNames[i] || s == kAttributeSlugs[i]) return kAllAttributes[i];
  return std::nullopt;
}

inline constexpr std::string_view kNotDocumented = "not-documented";

struct LabelSpace {
  AttributeKind attribute = AttributeKind::Site;
  std::vector<std::string> classes;  // ends with kNotDocumented

  std::size_t size() const noexcept { return classes.size(); }

  std::optional<std::size_t> index_of(std::string_view code) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == code) return i;
    return std::nullopt;
  }

  bool contains(std::string_view code) const { return index_of(code).has_value(); }

  std::size_t not_documented_index() const { return *index_of(kNotDocumented); }
};

using LabelSpaces = std::array<LabelSpace, kAttributeCount>;

enum class DocumentKind : std::uint8_t { Pathology, Radiology, Operative };

inline constexpr std::array<DocumentKind, 3> kAllDocumentKinds = {DocumentKind::Pathology, DocumentKind::Radiology,
                                                                  DocumentKind::Operative};

inline std::string_view name(DocumentKind k) {
  switch (k) {
    case DocumentKind::Pathology: return "Pathology";
    case DocumentKind::Radiology: return "Radiology";
    case DocumentKind::Operative: return "Operative";
  }
  return "?";
}

/// Accepts "Pathology"/"path", "Radiology"/"rad", "Operative"/"op".
inline DocumentKind parse_document_kind(std::string_view s) {
  if (s == "Pathology" || s == "path") return DocumentKind::Pathology;
  if (s == "Radiology" || s == "rad") return DocumentKind::Radiology;
  if (s == "Operative" || s == "op") return DocumentKind::Operative;
  throw std::invalid_argument("unknown document kind '" + std::string(s) + "'");
}

/// Bit set over DocumentKind.
class KindSet {
 public:
  constexpr KindSet() = default;
  constexpr KindSet(std::initializer_list<DocumentKind> kinds) {
    for (auto k : kinds) insert(k);
  }
  static constexpr KindSet all() { return {DocumentKind::Pathology, DocumentKind::Radiology, DocumentKind::Operative}; }

  constexpr void insert(DocumentKind k) { bits_ |= bit(k); }
  constexpr bool contains(DocumentKind k) const { return (bits_ & bit(k)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool operator==(const KindSet&) const = default;

  std::string to_string() const {
    std::string s;
    const char* names[] = {"path", "rad", "op"};
    for (int i = 0; i < 3; ++i)
      if (bits_ & (1u << i)) {
        if (!s.empty()) s += ',';
        s += names[i];
      }
    return s;
  }

  /// Parses "path,rad,op" (any subset, any order).
  static KindSet parse(std::string_view s) {
    KindSet out;
    std::size_t i = 0;
    while (i <= s.size()) {
      std::size_t j = s.find(',', i);
      if (j == std::string_view::npos) j = s.size();
      if (j > i) out.insert(parse_document_kind(s.substr(i, j - i)));
      i = j + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty document kind set");
    return out;
  }

 private:
  static constexpr std::uint8_t bit(DocumentKind k) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
  std::uint8_t bits_ = 0;
};

struct ClinicalDocument {
  std::string doc_id;
  std::string patient_id;
  DocumentKind kind = DocumentKind::Pathology;
  int date = 0;  // day index from the corpus epoch
  std::string text;
};

struct RegistryRecord {
  std::string patient_id;
  int diagnosis_date = 0;
  std::array<std::string, kAttributeCount> labels;

  const std::string& label(AttributeKind a) const { return labels[index(a)]; }
};

struct Patient {
  std::string patient_id;
  std::vector<ClinicalDocument> documents;  // sorted by (date, doc_id)
  std::optional<RegistryRecord> registry;   // absent for non-cancer controls

  bool is_cancer() const noexcept { return registry.has_value(); }
};

/// Character range of a planted sentence that carries evidence for an attribute.
struct EvidenceSpan {
  std::string doc_id;
  AttributeKind attribute = AttributeKind::Site;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::size_t sentence_index = 0;
};

/// How a planted sentence bears on an attribute value.
enum class FactRole : std::uint8_t {
  Asserted,    // entails the value on its own
  Location,    // names a site without confirming malignancy there
  Malignancy,  // confirms malignancy without naming a site
  Possible,    // hedged or suspicious finding; entails nothing
  Negated,     // explicitly benign or negative
};

inline std::string_view name(FactRole r) {
  switch (r) {
    case FactRole::Asserted: return "asserted";
    case FactRole::Location: return "location";
    case FactRole::Malignancy: return "malignancy";
    case FactRole::Possible: return "possible";
    case FactRole::Negated: return "negated";
  }
  return "?";
}

inline FactRole parse_fact_role(std::string_view s) {
  for (auto r : {FactRole::Asserted, FactRole::Location, FactRole::Malignancy, FactRole::Possible, FactRole::Negated})
    if (name(r) == s) return r;
  throw FormatError("unknown fact role '" + std::string(s) + "'");
}

struct Fact {
  AttributeKind attribute = AttributeKind::Site;
  std::string code;  // empty for Malignancy facts
  FactRole role = FactRole::Asserted;

  bool operator==(const Fact&) const = default;
};

struct PlantedSentence {
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::vector<Fact> facts;
};

/// Generator bookkeeping for one document: where each sentence sits and what
/// it asserts.
struct PlantedDocument {
  std::string doc_id;
  std::vector<PlantedSentence> sentences;

  std::size_t sentence_count() const noexcept { return sentences.size(); }
};

/// Unlabeled note for masked-LM pretraining.
struct PoolNote {
  std::string note_id;
  DocumentKind kind = DocumentKind::Pathology;
  std::string text;
};

/// Class code -> lowercase surface aliases.
using AliasLexicon = std::map<std::string, std::vector<std::string>>;

}  // namespace oncoabs::corpus
