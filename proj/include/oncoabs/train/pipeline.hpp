#pragma once

#include <string>
#include <vector>

#include "oncoabs/baselines/bow.hpp"
#include "oncoabs/baselines/ontology.hpp"
#include "oncoabs/corpus/folds.hpp"
#include "oncoabs/corpus/generator.hpp"
#include "oncoabs/evalx/casefinding.hpp"
#include "oncoabs/evalx/metrics.hpp"
#include "oncoabs/train/datasets.hpp"
#include "oncoabs/train/trainer.hpp"

namespace oncoabs::train {

struct Partitions {
  std::vector<corpus::Patient> train, dev, test;
};

/// Fold plan matching a corpus of 6 equal folds: 4 train, 1 dev, 1 test.
inline corpus::FoldPlan six_fold_plan() {
  corpus::FoldPlan p;
  p.n_folds = 6;
  p.train = {0, 1, 2, 3};
  p.dev = {4};
  p.test = {5};
  return p;
}

inline Partitions partition_patients(const std::vector<corpus::Patient>& patients, const corpus::FoldPlan& plan,
                                     std::uint64_t fold_seed) {
  plan.validate();
  const auto folds = corpus::split_folds(patients, plan.n_folds, fold_seed);
  Partitions out;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    switch (plan.partition(folds[i])) {
      case corpus::Partition::Train: out.train.push_back(patients[i]); break;
      case corpus::Partition::Dev: out.dev.push_back(patients[i]); break;
      case corpus::Partition::Test: out.test.push_back(patients[i]); break;
      case corpus::Partition::Heldout: break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Abstraction

template <typename T>
struct AbstractionOutcome {
  TrainResult<T> training;
  evalx::MetricsReport test;
  evalx::ProbabilityMatrix test_probs;
  std::vector<AbstractionExample> test_examples;
};

struct AbstractionInputs {
  corpus::LabelSpace space;
  text::Window window;
  corpus::KindSet kinds = corpus::KindSet::all();
};

template <typename T = float>
AbstractionOutcome<T> run_abstraction(const Partitions& parts, const AbstractionInputs& in, const text::Vocab& vocab,
                                      model::ModelConfig mcfg, const TrainConfig& tcfg,
                                      const model::LoadedCheckpoint* init = nullptr, const EpochLogger& log = {}) {
  auto tr = build_abstraction_dataset(parts.train, in.space, in.window, in.kinds, vocab).examples;
  auto dv = build_abstraction_dataset(parts.dev, in.space, in.window, in.kinds, vocab).examples;
  auto te = build_abstraction_dataset(parts.test, in.space, in.window, in.kinds, vocab).examples;
  check_disjoint(tr, dv, te);
  mcfg.vocab_size = vocab.size();
  mcfg.n_classes = in.space.size();
  auto training = train_model<T>(tcfg, mcfg, tr, dv, {}, init, vocab.hash(), log);
  auto probs = predict_all(training.model, te);
  auto report = evalx::evaluate_multiclass(probs, labels_of(te), in.space.classes);
  return {std::move(training), std::move(report), std::move(probs), std::move(te)};
}

inline evalx::MetricsReport evaluate_bow(const baselines::BowModel& m, const std::vector<baselines::BowExample>& test,
                                         const corpus::LabelSpace& space) {
  evalx::ProbabilityMatrix p;
  std::vector<std::size_t> y;
  for (const auto& e : test) {
    p.push_back(baselines::bow_predict(m, e.words));
    y.push_back(e.label);
  }
  return evalx::evaluate_multiclass(p, y, space.classes);
}

struct BowOutcome {
  baselines::BowModel model;
  evalx::MetricsReport test;
};

inline BowOutcome run_bow(const Partitions& parts, const AbstractionInputs& in, const baselines::BowConfig& cfg = {}) {
  auto tr = baselines::bow_examples(parts.train, in.space, in.window, in.kinds);
  auto te = baselines::bow_examples(parts.test, in.space, in.window, in.kinds);
  if (te.empty()) throw EmptyInputError("bow: no test examples");
  auto m = baselines::bow_train(tr, in.space, cfg).model;
  auto report = evaluate_bow(m, te, in.space);
  return {std::move(m), std::move(report)};
}

/// Ontology baseline on the test partition's registry patients.
inline evalx::MetricsReport run_ontology(const Partitions& parts, const AbstractionInputs& in,
                                         const corpus::AliasLexicon& lexicon) {
  evalx::ProbabilityMatrix p;
  std::vector<std::size_t> y;
  for (const auto& pt : parts.test) {
    if (!pt.registry) continue;
    const auto docs = baselines::window_documents(pt, in.window, pt.registry->diagnosis_date, in.kinds);
    if (docs.empty()) continue;
    const auto idx = in.space.index_of(pt.registry->label(in.space.attribute));
    if (!idx) throw FormatError("patient " + pt.patient_id + " has a label outside the label space");
    p.push_back(baselines::ontology_predict(lexicon, in.space, docs));
    y.push_back(*idx);
  }
  if (y.empty()) throw EmptyInputError("ontology: no test patients with documents in the window");
  return evalx::evaluate_multiclass(p, y, in.space.classes);
}

// ---------------------------------------------------------------------------
// Case finding

/// Positive-class score for every document day of every patient.
template <typename T>
std::vector<evalx::PatientDayScores> casefinding_scores(const model::HanModel<T>& m,
                                                        const std::vector<corpus::Patient>& patients,
                                                        const text::Vocab& vocab,
                                                        corpus::KindSet kinds = corpus::KindSet::all()) {
  std::vector<evalx::PatientDayScores> out;
  for (const auto& p : patients) {
    evalx::PatientDayScores s;
    s.patient_id = p.patient_id;
    if (p.registry) s.diagnosis_date = p.registry->diagnosis_date;
    for (int d : document_days(p, kinds))
      s.days.push_back({d, m.predict(day_input(p, d, kinds, vocab)).probabilities[kPositive]});
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
struct CaseFindingRun {
  TrainResult<T> training;
  CaseFindingDataset train_set;
  double threshold = 0.5;  // tuned on dev patients
  evalx::CaseFindingOutcome test;
};

template <typename T = float>
CaseFindingRun<T> run_casefinding(const Partitions& parts, const CaseFindingScheme& scheme, const text::Vocab& vocab,
                                  model::ModelConfig mcfg, const TrainConfig& tcfg, const EpochLogger& log = {}) {
  auto tr = build_casefinding_dataset(parts.train, scheme, tcfg.seed, vocab);
  auto dv = build_casefinding_dataset(parts.dev, scheme, tcfg.seed + 1, vocab);
  mcfg.vocab_size = vocab.size();
  mcfg.n_classes = 2;
  auto training = train_model<T>(tcfg, mcfg, tr.examples, dv.examples, macro_auprc(2), nullptr, vocab.hash(), log);
  const double thr = evalx::tune_threshold(casefinding_scores(training.model, parts.dev, vocab));
  auto outcome = evalx::casefinding_patient_eval(casefinding_scores(training.model, parts.test, vocab), thr);
  return {std::move(training), std::move(tr), thr, std::move(outcome)};
}

}  // namespace oncoabs::train
