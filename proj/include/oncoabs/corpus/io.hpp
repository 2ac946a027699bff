#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/hash.hpp"
#include "oncoabs/corpus/generator.hpp"
#include "oncoabs/corpus/types.hpp"

namespace oncoabs::corpus {

using ojson = nlohmann::ordered_json;

inline ojson to_json(const ClinicalDocument& d) {
  ojson j;
  j["doc_id"] = d.doc_id;
  j["patient_id"] = d.patient_id;
  j["kind"] = std::string(name(d.kind));
  j["date"] = d.date;
  j["text"] = d.text;
  return j;
}

inline ClinicalDocument document_from_json(const nlohmann::json& j) {
  ClinicalDocument d;
  d.doc_id = j.at("doc_id").get<std::string>();
  d.patient_id = j.at("patient_id").get<std::string>();
  d.kind = parse_document_kind(j.at("kind").get<std::string>());
  d.date = j.at("date").get<int>();
  d.text = j.at("text").get<std::string>();
  if (d.text.empty()) throw FormatError("document " + d.doc_id + " has empty text");
  if (d.date < 0) throw FormatError("document " + d.doc_id + " has negative date");
  return d;
}

inline ojson to_json(const RegistryRecord& r) {
  ojson j;
  j["patient_id"] = r.patient_id;
  j["diagnosis_date"] = r.diagnosis_date;
  ojson labels = ojson::object();
  for (auto a : kAllAttributes) labels[std::string(name(a))] = r.label(a);
  j["labels"] = labels;
  return j;
}

inline RegistryRecord registry_from_json(const nlohmann::json& j) {
  RegistryRecord r;
  r.patient_id = j.at("patient_id").get<std::string>();
  r.diagnosis_date = j.at("diagnosis_date").get<int>();
  for (auto a : kAllAttributes) r.labels[index(a)] = j.at("labels").at(std::string(name(a))).get<std::string>();
  return r;
}

inline ojson to_json(const Patient& p) {
  ojson j;
  j["patient_id"] = p.patient_id;
  ojson docs = ojson::array();
  for (const auto& d : p.documents) docs.push_back(to_json(d));
  j["documents"] = docs;
  j["registry"] = p.registry ? to_json(*p.registry) : ojson(nullptr);
  return j;
}

inline Patient patient_from_json(const nlohmann::json& j) {
  Patient p;
  p.patient_id = j.at("patient_id").get<std::string>();
  for (const auto& d : j.at("documents")) p.documents.push_back(document_from_json(d));
  if (!j.at("registry").is_null()) p.registry = registry_from_json(j.at("registry"));
  return p;
}

inline ojson to_json(const Fact& f) {
  ojson j;
  j["attribute"] = std::string(name(f.attribute));
  j["code"] = f.code;
  j["role"] = std::string(name(f.role));
  return j;
}

inline ojson to_json(const EvidenceSpan& e) {
  ojson j;
  j["doc_id"] = e.doc_id;
  j["attribute"] = std::string(name(e.attribute));
  j["char_start"] = e.char_start;
  j["char_end"] = e.char_end;
  j["sentence_index"] = e.sentence_index;
  return j;
}

inline EvidenceSpan evidence_from_json(const nlohmann::json& j) {
  return {j.at("doc_id").get<std::string>(), parse_attribute(j.at("attribute").get<std::string>()),
          j.at("char_start").get<std::size_t>(), j.at("char_end").get<std::size_t>(),
          j.at("sentence_index").get<std::size_t>()};
}

inline ojson to_json(const PlantedDocument& d) {
  ojson j;
  j["doc_id"] = d.doc_id;
  ojson sents = ojson::array();
  for (const auto& s : d.sentences) {
    ojson sj;
    sj["char_start"] = s.char_start;
    sj["char_end"] = s.char_end;
    ojson facts = ojson::array();
    for (const auto& f : s.facts) facts.push_back(to_json(f));
    sj["facts"] = facts;
    sents.push_back(sj);
  }
  j["sentences"] = sents;
  return j;
}

inline PlantedDocument planted_from_json(const nlohmann::json& j) {
  PlantedDocument d;
  d.doc_id = j.at("doc_id").get<std::string>();
  for (const auto& sj : j.at("sentences")) {
    PlantedSentence s;
    s.char_start = sj.at("char_start").get<std::size_t>();
    s.char_end = sj.at("char_end").get<std::size_t>();
    for (const auto& fj : sj.at("facts"))
      s.facts.push_back({parse_attribute(fj.at("attribute").get<std::string>()), fj.at("code").get<std::string>(),
                         parse_fact_role(fj.at("role").get<std::string>())});
    d.sentences.push_back(std::move(s));
  }
  return d;
}

inline ojson to_json(const GeneratorConfig& c) {
  ojson j;
  j["n_cancer_patients"] = c.n_cancer_patients;
  j["n_control_patients"] = c.n_control_patients;
  j["n_site_classes"] = c.n_site_classes;
  j["n_histology_classes"] = c.n_histology_classes;
  j["cross_doc_fraction"] = c.cross_doc_fraction;
  j["negation_rate"] = c.negation_rate;
  j["variation_rate"] = c.variation_rate;
  j["docs_per_patient"] = {c.docs_per_patient.min, c.docs_per_patient.max};
  j["pre_diagnosis_history_days"] = {c.pre_diagnosis_history_days.min, c.pre_diagnosis_history_days.max};
  j["seed"] = c.seed;
  j["role_swap_rate"] = c.role_swap_rate;
  j["late_resection_rate"] = c.late_resection_rate;
  j["surgery_rate"] = c.surgery_rate;
  j["undocumented_stage_rate"] = c.undocumented_stage_rate;
  j["prediagnostic_suspicion_rate"] = c.prediagnostic_suspicion_rate;
  j["control_suspicion_rate"] = c.control_suspicion_rate;
  j["sentences_per_document"] = {c.sentences_per_document.min, c.sentences_per_document.max};
  j["zipf_exponent"] = c.zipf_exponent;
  j["n_pretrain_notes"] = c.n_pretrain_notes;
  return j;
}

/// Missing keys keep their defaults, so partial config files are accepted.
inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  auto get_range = [&](const char* key, IntRange& r) {
    if (j.contains(key)) r = {j.at(key).at(0).get<int>(), j.at(key).at(1).get<int>()};
  };
  get("n_cancer_patients", c.n_cancer_patients);
  get("n_control_patients", c.n_control_patients);
  get("n_site_classes", c.n_site_classes);
  get("n_histology_classes", c.n_histology_classes);
  get("cross_doc_fraction", c.cross_doc_fraction);
  get("negation_rate", c.negation_rate);
  get("variation_rate", c.variation_rate);
  get_range("docs_per_patient", c.docs_per_patient);
  get_range("pre_diagnosis_history_days", c.pre_diagnosis_history_days);
  get("seed", c.seed);
  get("role_swap_rate", c.role_swap_rate);
  get("late_resection_rate", c.late_resection_rate);
  get("surgery_rate", c.surgery_rate);
  get("undocumented_stage_rate", c.undocumented_stage_rate);
  get("prediagnostic_suspicion_rate", c.prediagnostic_suspicion_rate);
  get("control_suspicion_rate", c.control_suspicion_rate);
  get_range("sentences_per_document", c.sentences_per_document);
  get("zipf_exponent", c.zipf_exponent);
  get("n_pretrain_notes", c.n_pretrain_notes);
  return c;
}

inline ojson label_spaces_json(const LabelSpaces& spaces) {
  ojson j = ojson::object();
  for (const auto& s : spaces) j[std::string(name(s.attribute))] = s.classes;
  return j;
}

inline LabelSpaces label_spaces_from_json(const nlohmann::json& j) {
  LabelSpaces out;
  for (auto a : kAllAttributes) out[index(a)] = {a, j.at(std::string(name(a))).get<std::vector<std::string>>()};
  return out;
}

inline ojson lexicon_json(const std::array<AliasLexicon, kAttributeCount>& lex) {
  ojson j = ojson::object();
  for (auto a : kAllAttributes) {
    if (lex[index(a)].empty()) continue;
    ojson m = ojson::object();
    for (const auto& [code, aliases] : lex[index(a)]) m[code] = aliases;
    j[std::string(name(a))] = m;
  }
  return j;
}

inline std::array<AliasLexicon, kAttributeCount> lexicon_from_json(const nlohmann::json& j) {
  std::array<AliasLexicon, kAttributeCount> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto& lex = out[index(parse_attribute(it.key()))];
    for (auto c = it.value().begin(); c != it.value().end(); ++c) lex[c.key()] = c.value().get<std::vector<std::string>>();
  }
  return out;
}

template <typename T, typename F>
std::string jsonl(const std::vector<T>& items, F&& convert) {
  std::string out;
  for (const auto& x : items) {
    out += convert(x).dump();
    out += '\n';
  }
  return out;
}

inline constexpr const char* kPatientsFile = "patients.jsonl";

/// Serialized corpus files keyed by file name.
inline std::vector<std::pair<std::string, std::string>> serialize_corpus(const CorpusBundle& b) {
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back(kPatientsFile, jsonl(b.patients, [](const Patient& p) { return to_json(p); }));
  files.emplace_back("labelspaces.json", label_spaces_json(b.label_spaces).dump(2) + "\n");
  files.emplace_back("lexicon.json", lexicon_json(b.lexicon).dump(2) + "\n");
  files.emplace_back("evidence.jsonl", jsonl(b.evidence, [](const EvidenceSpan& e) { return to_json(e); }));
  files.emplace_back("planted.jsonl", jsonl(b.planted, [](const PlantedDocument& d) { return to_json(d); }));
  files.emplace_back("pretrain_pool.jsonl", jsonl(b.pretrain_pool, [](const PoolNote& n) {
                       ojson j;
                       j["note_id"] = n.note_id;
                       j["kind"] = std::string(name(n.kind));
                       j["text"] = n.text;
                       return j;
                     }));
  files.emplace_back("config.json", to_json(b.config).dump(2) + "\n");
  return files;
}

/// Writes the corpus files and returns their content hashes.
inline std::vector<std::pair<std::string, std::uint64_t>> write_corpus(const std::filesystem::path& dir,
                                                                       const CorpusBundle& b) {
  std::vector<std::pair<std::string, std::uint64_t>> hashes;
  for (const auto& [file, bytes] : serialize_corpus(b)) {
    write_file(dir / file, bytes);
    hashes.emplace_back(file, fnv1a(bytes));
  }
  return hashes;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Loads a corpus directory. Missing optional companions (evidence, planted,
/// pool) load as empty.
inline CorpusBundle read_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / kPatientsFile))
    throw MissingArtifactError("corpus " + (dir / kPatientsFile).string(), "gen-corpus");
  CorpusBundle b;
  for (const auto& j : read_jsonl(dir / kPatientsFile)) b.patients.push_back(patient_from_json(j));
  b.label_spaces = label_spaces_from_json(read_json(dir / "labelspaces.json"));
  if (std::filesystem::exists(dir / "lexicon.json")) b.lexicon = lexicon_from_json(read_json(dir / "lexicon.json"));
  if (std::filesystem::exists(dir / "config.json")) b.config = generator_config_from_json(read_json(dir / "config.json"));
  if (std::filesystem::exists(dir / "evidence.jsonl"))
    for (const auto& j : read_jsonl(dir / "evidence.jsonl")) b.evidence.push_back(evidence_from_json(j));
  if (std::filesystem::exists(dir / "planted.jsonl"))
    for (const auto& j : read_jsonl(dir / "planted.jsonl")) b.planted.push_back(planted_from_json(j));
  if (std::filesystem::exists(dir / "pretrain_pool.jsonl"))
    for (const auto& j : read_jsonl(dir / "pretrain_pool.jsonl"))
      b.pretrain_pool.push_back({j.at("note_id").get<std::string>(), parse_document_kind(j.at("kind").get<std::string>()),
                                 j.at("text").get<std::string>()});
  return b;
}

/// Content hash of the patient file, used to key derived artifacts.
inline std::uint64_t corpus_hash(const CorpusBundle& b) {
  Fnv1a h;
  for (const auto& p : b.patients) h.update(to_json(p).dump()).update("\n");
  return h.digest();
}

}  // namespace oncoabs::corpus
