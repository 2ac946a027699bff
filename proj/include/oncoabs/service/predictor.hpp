#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oncoabs/model/checkpoint.hpp"
#include "oncoabs/rationale/rationale.hpp"
#include "oncoabs/service/store.hpp"
#include "oncoabs/textproc/assemble.hpp"
#include "oncoabs/textproc/vocab.hpp"

namespace oncoabs::service {

inline constexpr std::size_t kTopClasses = 5;
inline constexpr std::size_t kRationaleSentences = 3;

/// Extraction used when no classifier is installed for an attribute.
inline Extraction fallback_extraction(const corpus::Patient& p, corpus::AttributeKind a) {
  Extraction x;
  x.patient_id = p.patient_id;
  x.attribute = a;
  x.predicted = std::string(corpus::kNotDocumented);
  x.top = {{x.predicted, 1.0}};
  x.rationale = {{"k", 0}, {"entries", ojson::array()}};
  return x;
}

struct AttributeClassifier {
  model::HanModel<float> model;
  std::vector<std::string> labels;
  text::Window window;
  corpus::KindSet kinds = corpus::KindSet::all();
  std::string name;  // e.g. "site.transformer.ckpt"
};

/// Anchor day for a patient: the diagnosis date when known, otherwise the
/// date of the latest document.
inline int anchor_day(const corpus::Patient& p) {
  if (p.registry) return p.registry->diagnosis_date;
  int d = 0;
  for (const auto& doc : p.documents) d = std::max(d, doc.date);
  return d;
}

/// Runs the installed classifiers; attributes without one get the fallback.
class ModelPredictor {
 public:
  ModelPredictor(text::Vocab vocab, std::map<corpus::AttributeKind, AttributeClassifier> models)
      : vocab_(std::make_shared<text::Vocab>(std::move(vocab))),
        models_(std::make_shared<std::map<corpus::AttributeKind, AttributeClassifier>>(std::move(models))) {}

  std::size_t installed() const { return models_->size(); }

  Extraction operator()(const corpus::Patient& p, corpus::AttributeKind a) const {
    auto m = models_->find(a);
    if (m == models_->end() || p.documents.empty()) return fallback_extraction(p, a);
    const auto& c = m->second;
    Extraction x = fallback_extraction(p, a);
    x.model = c.name;
    text::TokenSequence seq;
    try {
      seq = text::assemble_input(p, c.window, anchor_day(p), c.kinds, *vocab_, text::kDefaultMaxSentences, a);
    } catch (const EmptyInputError&) {
      return x;  // nothing in the window
    }
    const auto pred = c.model.predict(seq);
    std::vector<std::size_t> order(pred.probabilities.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return pred.probabilities[i] > pred.probabilities[j]; });
    x.predicted = c.labels.at(pred.predicted);
    x.top.clear();
    for (std::size_t i = 0; i < std::min(kTopClasses, order.size()); ++i)
      x.top.push_back({c.labels.at(order[i]), pred.probabilities[order[i]]});
    auto r = rationale::extract_rationale(pred, seq, std::min(kRationaleSentences, seq.sentence_count()));
    rationale::attach_text(r, p);
    x.rationale = rationale::to_json(r);
    return x;
  }

 private:
  std::shared_ptr<const text::Vocab> vocab_;
  std::shared_ptr<const std::map<corpus::AttributeKind, AttributeClassifier>> models_;
};

/// Loads `<dir>/vocab.json` and, per attribute, the first of
/// `<slug>.transformer.ckpt` / `<slug>.context-free.ckpt` that exists.
/// Window and document kinds come from the checkpoint's extra header.
inline ModelPredictor load_model_predictor(const std::filesystem::path& dir) {
  auto vocab = text::load_vocab(dir / "vocab.json");
  std::map<corpus::AttributeKind, AttributeClassifier> models;
  for (auto a : corpus::kAllAttributes)
    for (auto e : {model::EncoderKind::TinyTransformer, model::EncoderKind::ContextFree}) {
      const auto file = model::checkpoint_filename(corpus::slug(a), e);
      if (!std::filesystem::exists(dir / file)) continue;
      auto ck = model::load_checkpoint(dir / file);
      if (ck.meta.labels.size() != ck.meta.config.n_classes)
        throw FormatError(file + ": label list does not match the classifier outputs");
      AttributeClassifier c{model::model_from_checkpoint<float>(ck, vocab.hash()), ck.meta.labels, {}, corpus::KindSet::all(), file};
      if (ck.meta.extra.contains("window")) c.window = text::parse_window(ck.meta.extra["window"].get<std::string>());
      if (ck.meta.extra.contains("kinds")) c.kinds = corpus::KindSet::parse(ck.meta.extra["kinds"].get<std::string>());
      models.emplace(a, std::move(c));
      break;
    }
  return ModelPredictor(std::move(vocab), std::move(models));
}

}  // namespace oncoabs::service
