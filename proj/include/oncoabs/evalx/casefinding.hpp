#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/evalx/metrics.hpp"

namespace oncoabs::evalx {

struct DayScore {
  int day = 0;
  double score = 0.0;
};

/// Per-day positive scores for one patient. `diagnosis_date` is set for
/// registry patients only.
struct PatientDayScores {
  std::string patient_id;
  std::optional<int> diagnosis_date;
  std::vector<DayScore> days;
};

enum class Verdict { TruePositive, FalseNegative, EarlyFlag, FalsePositive, TrueNegative };

inline std::string_view name(Verdict v) {
  switch (v) {
    case Verdict::TruePositive: return "TP";
    case Verdict::FalseNegative: return "FN";
    case Verdict::EarlyFlag: return "FP+FN";
    case Verdict::FalsePositive: return "FP";
    case Verdict::TrueNegative: return "TN";
  }
  return "?";
}

struct PatientVerdict {
  std::string patient_id;
  std::optional<int> diagnosis_date;
  std::optional<int> first_positive_day;
  Verdict verdict = Verdict::TrueNegative;
  bool correct() const { return verdict == Verdict::TruePositive || verdict == Verdict::TrueNegative; }
};

struct CaseFindingWindow {
  int days_before = 7;
  int days_after = 30;
};

struct CaseFindingOutcome {
  double threshold = 0.5;
  CaseFindingWindow window;
  std::vector<PatientVerdict> verdicts;  // sorted by patient id
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Patient-level case finding. The first day scoring at or above the
/// threshold decides the patient. Registry patients are correct when that day
/// lies in [diagnosis - 7, diagnosis + 30]; a flag before the window counts
/// as both a false positive and a false negative. Non-registry patients are
/// correct when no day is flagged.
inline CaseFindingOutcome casefinding_patient_eval(std::vector<PatientDayScores> patients, double threshold,
                                                   CaseFindingWindow window = {}) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold", "must lie strictly between 0 and 1");
  std::sort(patients.begin(), patients.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  CaseFindingOutcome o;
  o.threshold = threshold;
  o.window = window;
  for (auto& p : patients) {
    std::sort(p.days.begin(), p.days.end(), [](const DayScore& a, const DayScore& b) { return a.day < b.day; });
    PatientVerdict v{p.patient_id, p.diagnosis_date, std::nullopt, Verdict::TrueNegative};
    for (const auto& d : p.days)
      if (d.score >= threshold) {
        v.first_positive_day = d.day;
        break;
      }
    if (p.diagnosis_date) {
      const int lo = *p.diagnosis_date - window.days_before, hi = *p.diagnosis_date + window.days_after;
      if (!v.first_positive_day || *v.first_positive_day > hi) {
        v.verdict = Verdict::FalseNegative;
        ++o.fn;
      } else if (*v.first_positive_day < lo) {
        v.verdict = Verdict::EarlyFlag;
        ++o.fp;
        ++o.fn;
      } else {
        v.verdict = Verdict::TruePositive;
        ++o.tp;
      }
    } else if (v.first_positive_day) {
      v.verdict = Verdict::FalsePositive;
      ++o.fp;
    } else {
      ++o.tn;
    }
    o.verdicts.push_back(std::move(v));
  }
  o.precision = o.tp + o.fp ? static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fp) : 0.0;
  o.recall = o.tp + o.fn ? static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fn) : 0.0;
  o.f1 = f1_score(o.precision, o.recall);
  return o;
}

/// Threshold maximizing patient-level F1, searched over midpoints between
/// consecutive distinct scores and 0.5; ties go to the value nearest 0.5.
inline double tune_threshold(const std::vector<PatientDayScores>& patients, CaseFindingWindow window = {}) {
  std::vector<double> s;
  for (const auto& p : patients)
    for (const auto& d : p.days) s.push_back(d.score);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> cand{0.5};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) cand.push_back(0.5 * (s[i] + s[i + 1]));
  double best = 0.5, best_f1 = -1.0;
  for (double t : cand) {
    if (!(t > 0.0 && t < 1.0)) continue;
    const double f = casefinding_patient_eval(patients, t, window).f1;
    if (f > best_f1 + 1e-12 || (std::abs(f - best_f1) <= 1e-12 && std::abs(t - 0.5) < std::abs(best - 0.5))) {
      best_f1 = f;
      best = t;
    }
  }
  return best;
}

inline nlohmann::ordered_json to_json(const CaseFindingOutcome& o, bool include_verdicts = false) {
  nlohmann::ordered_json j;
  j["threshold"] = o.threshold;
  j["window"] = {{"days_before", o.window.days_before}, {"days_after", o.window.days_after}};
  j["accounting"] = "early flag counts as FP and FN";
  j["tp"] = o.tp;
  j["fp"] = o.fp;
  j["fn"] = o.fn;
  j["tn"] = o.tn;
  j["precision"] = o.precision;
  j["recall"] = o.recall;
  j["f1"] = o.f1;
  j["n_patients"] = o.verdicts.size();
  if (include_verdicts) {
    nlohmann::ordered_json vs = nlohmann::ordered_json::array();
    for (const auto& v : o.verdicts) {
      nlohmann::ordered_json x;
      x["patient_id"] = v.patient_id;
      x["diagnosis_date"] = v.diagnosis_date ? nlohmann::ordered_json(*v.diagnosis_date) : nlohmann::ordered_json(nullptr);
      x["first_positive_day"] =
          v.first_positive_day ? nlohmann::ordered_json(*v.first_positive_day) : nlohmann::ordered_json(nullptr);
      x["verdict"] = std::string(name(v.verdict));
      x["correct"] = v.correct();
      vs.push_back(x);
    }
    j["verdicts"] = vs;
  }
  return j;
}

}  // namespace oncoabs::evalx
