#pragma once

#include <string>
#include <vector>

#include "oncoabs/corpus/generator.hpp"
#include "oncoabs/textproc/vocab.hpp"

namespace oncoabs::fixture {

inline corpus::GeneratorConfig small_config(std::uint64_t seed = 11) {
  corpus::GeneratorConfig c;
  c.n_cancer_patients = 60;
  c.n_control_patients = 20;
  c.n_site_classes = 12;
  c.n_histology_classes = 10;
  c.n_pretrain_notes = 50;
  c.variation_rate = 0.2;  // milder than the full-size defaults so tiny models still learn
  c.role_swap_rate = 0.5;
  c.seed = seed;
  return c;
}

inline const corpus::CorpusBundle& small_corpus() {
  static const corpus::CorpusBundle b = corpus::generate_corpus(small_config());
  return b;
}

inline std::vector<std::string> all_texts(const corpus::CorpusBundle& b) {
  std::vector<std::string> out;
  for (const auto& p : b.patients)
    for (const auto& d : p.documents) out.push_back(d.text);
  return out;
}

inline const text::Vocab& small_vocab() {
  static const text::Vocab v = text::learn_vocab(all_texts(small_corpus()), 600);
  return v;
}

inline const corpus::PlantedDocument* planted_for(const corpus::CorpusBundle& b, const std::string& doc_id) {
  for (const auto& d : b.planted)
    if (d.doc_id == doc_id) return &d;
  return nullptr;
}

}  // namespace oncoabs::fixture
