#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"

namespace oncoabs::evalx {

namespace detail {

inline void check_sizes(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": " + std::to_string(a) + " scores for " + std::to_string(b) + " labels");
}

// Indices sorted by descending score; equal scores keep input order.
inline std::vector<std::size_t> descending(std::span<const double> s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

}  // namespace detail

/// Mann-Whitney AUROC: (concordant + 0.5 tied) positive/negative pairs over
/// P*N, computed from mid-ranks.
inline double auroc_binary(std::span<const double> scores, std::span<const int> labels) {
  detail::check_sizes(scores.size(), labels.size(), "auroc_binary");
  std::size_t P = 0;
  for (int l : labels) P += l != 0;
  const std::size_t N = labels.size() - P;
  if (P == 0 || N == 0) throw UndefinedMetricError("AUROC needs at least one positive and one negative");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum over positives of (#negatives strictly below + 0.5 * #negatives tied).
  double total = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos = 0, neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? pos : neg) += 1;
      ++j;
    }
    total += static_cast<double>(pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg));
    neg_below += neg;
    i = j;
  }
  return total / (static_cast<double>(P) * static_cast<double>(N));
}

enum class TieMode {
  Average,     // expected step-wise AP over all orderings within each tied block
  InputOrder,  // tied items ranked in input order
};

/// Step-wise average precision: mean over positives of the precision at the
/// positive's rank. Under TieMode::Average a tied block of n items holding p
/// positives, preceded by r items of which c are positive, contributes
///   sum_{k=1..n} (p/n) * (c + 1 + (k-1)(p-1)/(n-1)) / (r + k),
/// the expectation over uniformly random orderings of the block.
inline double average_precision(std::span<const double> scores, std::span<const int> labels,
                                TieMode ties = TieMode::Average) {
  detail::check_sizes(scores.size(), labels.size(), "average_precision");
  std::size_t P = 0;
  for (int l : labels) P += l != 0;
  if (P == 0) throw UndefinedMetricError("average precision needs at least one positive");
  const auto idx = detail::descending(scores);
  double sum = 0.0;
  if (ties == TieMode::InputOrder) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (labels[idx[r]]) sum += static_cast<double>(++hits) / static_cast<double>(r + 1);
    return sum / static_cast<double>(P);
  }
  std::size_t before = 0, pos_before = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i, p = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) p += labels[idx[j++]] != 0;
    const std::size_t n = j - i;
    if (p > 0) {
      const double share = static_cast<double>(p) / static_cast<double>(n);
      const double slope = n > 1 ? static_cast<double>(p - 1) / static_cast<double>(n - 1) : 0.0;
      for (std::size_t k = 1; k <= n; ++k)
        sum += share * (static_cast<double>(pos_before) + 1.0 + static_cast<double>(k - 1) * slope) /
               static_cast<double>(before + k);
    }
    before += n;
    pos_before += p;
    i = j;
  }
  return sum / static_cast<double>(P);
}

enum class BinaryMetric { Auroc, Auprc };

inline double binary_metric(BinaryMetric m, std::span<const double> scores, std::span<const int> labels) {
  return m == BinaryMetric::Auroc ? auroc_binary(scores, labels) : average_precision(scores, labels);
}

using ProbabilityMatrix = std::vector<std::vector<double>>;

inline void check_distribution_rows(const ProbabilityMatrix& probs, std::size_t n_classes) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != n_classes)
      throw DimensionError("probability row " + std::to_string(i) + " has " + std::to_string(probs[i].size()) +
                           " entries, expected " + std::to_string(n_classes));
    const double s = std::accumulate(probs[i].begin(), probs[i].end(), 0.0);
    if (std::abs(s - 1.0) > 1e-5) throw DimensionError("probability row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

struct ClassMetric {
  std::size_t class_index = 0;
  std::size_t n_positive = 0;
  double value = 0.0;
};

/// One-vs-rest metric for every class with at least one positive.
inline std::vector<ClassMetric> per_class_ovr(BinaryMetric metric, const ProbabilityMatrix& probs,
                                              std::span<const std::size_t> labels, std::size_t n_classes) {
  detail::check_sizes(probs.size(), labels.size(), "macro_ovr");
  check_distribution_rows(probs, n_classes);
  std::vector<ClassMetric> out;
  std::vector<double> s(probs.size());
  std::vector<int> y(probs.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= n_classes) throw DimensionError("label index outside the class range");
      s[i] = probs[i][c];
      y[i] = labels[i] == c;
      pos += labels[i] == c;
    }
    if (pos == 0) continue;
    out.push_back({c, pos, binary_metric(metric, s, y)});
  }
  if (out.empty()) throw UndefinedMetricError("no class has a positive instance");
  return out;
}

inline double macro_ovr(BinaryMetric metric, const ProbabilityMatrix& probs, std::span<const std::size_t> labels,
                        std::size_t n_classes) {
  const auto per = per_class_ovr(metric, probs, labels, n_classes);
  double s = 0.0;
  for (const auto& c : per) s += c.value;
  return s / static_cast<double>(per.size());
}

inline std::size_t argmax(const std::vector<double>& row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

inline double accuracy(const ProbabilityMatrix& probs, std::span<const std::size_t> labels) {
  detail::check_sizes(probs.size(), labels.size(), "accuracy");
  if (labels.empty()) throw UndefinedMetricError("accuracy of zero instances");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += argmax(probs[i]) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

/// 2 / (1/precision + 1/recall) when both are nonzero, else 0.
inline double f1_score(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  return 2.0 / (1.0 / precision + 1.0 / recall);
}

struct PerClassReport {
  std::string code;
  std::size_t n_positive = 0;
  double auroc = 0.0;  // NaN when the class has no negatives
  double auprc = 0.0;
};

struct MetricsReport {
  std::string averaging = "macro-ovr";
  std::size_t n_instances = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  double accuracy = 0.0;
  std::vector<PerClassReport> per_class;
};

/// Full report for a multiclass attribute. `class_codes` names the columns.
inline MetricsReport evaluate_multiclass(const ProbabilityMatrix& probs, std::span<const std::size_t> labels,
                                         const std::vector<std::string>& class_codes) {
  const std::size_t C = class_codes.size();
  MetricsReport r;
  r.n_instances = labels.size();
  const auto pr = per_class_ovr(BinaryMetric::Auprc, probs, labels, C);
  const bool all_one_class = pr.size() == 1;
  double roc_sum = 0.0, prc_sum = 0.0;
  for (const auto& c : pr) {
    PerClassReport pc{class_codes[c.class_index], c.n_positive, std::nan(""), c.value};
    if (!all_one_class) {
      std::vector<double> s(probs.size());
      std::vector<int> y(probs.size());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        s[i] = probs[i][c.class_index];
        y[i] = labels[i] == c.class_index;
      }
      pc.auroc = auroc_binary(s, y);
      roc_sum += pc.auroc;
    }
    prc_sum += c.value;
    r.per_class.push_back(pc);
  }
  if (all_one_class) throw UndefinedMetricError("AUROC needs at least two classes present");
  r.auroc = roc_sum / static_cast<double>(pr.size());
  r.auprc = prc_sum / static_cast<double>(pr.size());
  r.accuracy = accuracy(probs, labels);
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["averaging"] = r.averaging;
  j["n_instances"] = r.n_instances;
  j["auroc"] = r.auroc;
  j["auprc"] = r.auprc;
  j["accuracy"] = r.accuracy;
  nlohmann::ordered_json pcs = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class) {
    nlohmann::ordered_json pc;
    pc["class"] = c.code;
    pc["n_positive"] = c.n_positive;
    pc["auroc"] = std::isnan(c.auroc) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.auroc);
    pc["auprc"] = c.auprc;
    pcs.push_back(pc);
  }
  j["per_class"] = pcs;
  return j;
}

}  // namespace oncoabs::evalx
