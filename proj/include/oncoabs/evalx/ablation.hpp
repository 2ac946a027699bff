#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/evalx/metrics.hpp"
#include "oncoabs/textproc/assemble.hpp"

namespace oncoabs::evalx {

struct AblationVariant {
  corpus::KindSet kinds = corpus::KindSet::all();
  text::Window window;

  std::string label() const { return kinds.to_string() + "@" + text::to_string(window); }
};

struct AblationRow {
  AblationVariant variant;
  MetricsReport report;
};

struct AblationDelta {
  std::size_t from = 0, to = 0;  // row indices; delta = to - from
  double auroc = 0.0, auprc = 0.0, accuracy = 0.0;
};

struct AblationResult {
  corpus::AttributeKind attribute = corpus::AttributeKind::Site;
  std::vector<AblationRow> rows;
  std::vector<AblationDelta> deltas;  // every ordered pair i < j
};

/// Trains and evaluates one variant on the test partition. The runner owns
/// folds and seeds and must use the same ones for every variant.
using VariantRunner = std::function<MetricsReport(const AblationVariant&)>;

inline AblationResult run_ablation(corpus::AttributeKind attribute, const std::vector<AblationVariant>& variants,
                                   const VariantRunner& run) {
  if (variants.size() < 2) throw ConfigError("variants", "an ablation needs at least two variants");
  AblationResult r;
  r.attribute = attribute;
  for (const auto& v : variants) r.rows.push_back({v, run(v)});
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    for (std::size_t j = i + 1; j < r.rows.size(); ++j) {
      const auto& a = r.rows[i].report;
      const auto& b = r.rows[j].report;
      r.deltas.push_back({i, j, b.auroc - a.auroc, b.auprc - a.auprc, b.accuracy - a.accuracy});
    }
  return r;
}

namespace detail {
inline std::string fixed(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(6);
  o << v;
  return o.str();
}
}  // namespace detail

/// Columns: attribute, kinds, window, n_test, auroc, auprc, accuracy.
inline std::string ablation_tsv(const AblationResult& r) {
  std::string out = "attribute\tkinds\twindow\tn_test\tauroc\tauprc\taccuracy\n";
  for (const auto& row : r.rows) {
    out += std::string(corpus::slug(r.attribute)) + "\t" + row.variant.kinds.to_string() + "\t" +
           text::to_string(row.variant.window) + "\t" + std::to_string(row.report.n_instances) + "\t" +
           detail::fixed(row.report.auroc) + "\t" + detail::fixed(row.report.auprc) + "\t" +
           detail::fixed(row.report.accuracy) + "\n";
  }
  return out;
}

/// Columns: from, to, delta_auroc, delta_auprc, delta_accuracy.
inline std::string deltas_tsv(const AblationResult& r) {
  std::string out = "from\tto\tdelta_auroc\tdelta_auprc\tdelta_accuracy\n";
  for (const auto& d : r.deltas)
    out += r.rows[d.from].variant.label() + "\t" + r.rows[d.to].variant.label() + "\t" + detail::fixed(d.auroc) + "\t" +
           detail::fixed(d.auprc) + "\t" + detail::fixed(d.accuracy) + "\n";
  return out;
}

inline nlohmann::ordered_json to_json(const AblationResult& r) {
  nlohmann::ordered_json j;
  j["attribute"] = std::string(corpus::slug(r.attribute));
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"kinds", row.variant.kinds.to_string()},
                    {"window", text::to_string(row.variant.window)},
                    {"metrics", to_json(row.report)}});
  j["variants"] = rows;
  nlohmann::ordered_json ds = nlohmann::ordered_json::array();
  for (const auto& d : r.deltas)
    ds.push_back({{"from", d.from}, {"to", d.to}, {"auroc", d.auroc}, {"auprc", d.auprc}, {"accuracy", d.accuracy}});
  j["deltas"] = ds;
  return j;
}

}  // namespace oncoabs::evalx
