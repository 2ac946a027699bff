#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/corpus/types.hpp"
#include "oncoabs/service/events.hpp"

namespace oncoabs::service {

using ojson = nlohmann::ordered_json;

struct ClassProbability {
  std::string code;
  double probability = 0.0;
};

/// One model output shown for review.
struct Extraction {
  std::string patient_id;
  corpus::AttributeKind attribute = corpus::AttributeKind::Site;
  std::string predicted;
  std::vector<ClassProbability> top;  // at most 5, descending
  ojson rationale = ojson::object();  // rationale JSON with snippets
  std::string model = "none";
};

inline std::string extraction_id(std::string_view patient_id, corpus::AttributeKind a) {
  return std::string(patient_id) + ":" + std::string(corpus::slug(a));
}

using Predictor = std::function<Extraction(const corpus::Patient&, corpus::AttributeKind)>;

enum class ItemStatus { Pending, Accepted, Corrected };

inline std::string_view name(ItemStatus s) {
  switch (s) {
    case ItemStatus::Pending: return "pending";
    case ItemStatus::Accepted: return "accepted";
    case ItemStatus::Corrected: return "corrected";
  }
  return "?";
}

inline std::optional<ItemStatus> parse_status(std::string_view s) {
  for (auto v : {ItemStatus::Pending, ItemStatus::Accepted, ItemStatus::Corrected})
    if (name(v) == s) return v;
  return std::nullopt;
}

struct CurationItem {
  Extraction extraction;
  ItemStatus status = ItemStatus::Pending;
  std::string final_label;  // label recorded by the latest verdict
  std::string reviewer;
  std::int64_t reviewed_at_ms = 0;
  std::string event_id;
};

inline ojson to_json(const CurationItem& it) {
  ojson j;
  const auto& x = it.extraction;
  j["extraction_id"] = extraction_id(x.patient_id, x.attribute);
  j["patient_id"] = x.patient_id;
  j["attribute"] = std::string(corpus::slug(x.attribute));
  j["predicted"] = x.predicted;
  ojson top = ojson::array();
  for (const auto& c : x.top) top.push_back({{"code", c.code}, {"probability", c.probability}});
  j["top"] = top;
  j["model"] = x.model;
  j["status"] = std::string(name(it.status));
  j["corrected_label"] = it.status == ItemStatus::Corrected ? ojson(it.final_label) : ojson(nullptr);
  j["reviewer"] = it.reviewer.empty() ? ojson(nullptr) : ojson(it.reviewer);
  j["reviewed_at_ms"] = it.status == ItemStatus::Pending ? ojson(nullptr) : ojson(it.reviewed_at_ms);
  return j;
}

/// HTTP-shaped outcome of a store operation.
struct Reply {
  int status = 200;
  ojson body;
};

inline Reply error_reply(int status, std::string code, std::string message) {
  return {status, ojson{{"code", std::move(code)}, {"message", std::move(message)}}};
}

struct QueueFilter {
  std::optional<corpus::AttributeKind> attribute;
  std::optional<ItemStatus> status;
  std::size_t page = 1;  // 1-based
  std::size_t page_size = 50;
};

struct QueuePage {
  std::size_t total = 0;  // matching items over all pages
  std::vector<CurationItem> items;
};

/// Materialized curation state: precomputed extractions plus every verdict in
/// the event log, latest wins. Reads take a shared lock; verdicts are
/// validated, appended durably, then applied under an exclusive lock.
class CurationStore {
 public:
  using Clock = std::function<std::int64_t()>;

  CurationStore(std::vector<corpus::Patient> patients, corpus::LabelSpaces spaces, const Predictor& predictor,
                const std::filesystem::path& log_path, Clock clock = system_clock_ms)
      : patients_(std::move(patients)), spaces_(std::move(spaces)), log_(log_path), clock_(std::move(clock)) {
    std::sort(patients_.begin(), patients_.end(),
              [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
    for (std::size_t i = 0; i < patients_.size(); ++i) patient_index_[patients_[i].patient_id] = i;
    run_inference(predictor);
    for (const auto& e : read_event_log(log_path)) replay(e);
  }

  static std::int64_t system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  const std::filesystem::path& log_path() const { return log_.path(); }

  std::size_t item_count() const {
    std::shared_lock lock(mu_);
    return items_.size();
  }

  std::optional<CurationItem> item(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = items_.find(id);
    if (it == items_.end()) return std::nullopt;
    return it->second;
  }

  QueuePage queue(const QueueFilter& f) const {
    std::shared_lock lock(mu_);
    QueuePage page;
    const std::size_t first = (f.page - 1) * f.page_size;
    for (const auto& id : order_) {
      const auto& it = items_.at(id);
      if (f.attribute && it.extraction.attribute != *f.attribute) continue;
      if (f.status && it.status != *f.status) continue;
      if (page.total >= first && page.items.size() < f.page_size) page.items.push_back(it);
      ++page.total;
    }
    return page;
  }

  /// Documents plus every extraction of the patient. Rationale snippets are
  /// checked against the document text before they are returned.
  std::optional<ojson> patient_view(const std::string& patient_id) const {
    std::shared_lock lock(mu_);
    auto pi = patient_index_.find(patient_id);
    if (pi == patient_index_.end()) return std::nullopt;
    const auto& p = patients_[pi->second];
    ojson j;
    j["patient_id"] = p.patient_id;
    ojson docs = ojson::array();
    for (const auto& d : p.documents)
      docs.push_back({{"doc_id", d.doc_id}, {"kind", std::string(corpus::name(d.kind))}, {"date", d.date}, {"text", d.text}});
    j["documents"] = docs;
    ojson ex = ojson::array();
    for (auto a : corpus::kAllAttributes) {
      const auto& it = items_.at(extraction_id(p.patient_id, a));
      verify_rationale(p, it.extraction.rationale);
      auto x = to_json(it);
      x["rationale"] = it.extraction.rationale;
      ex.push_back(std::move(x));
    }
    j["extractions"] = ex;
    return j;
  }

  /// POST /verdict semantics. `request` holds event_id, verdict and, for
  /// corrections, corrected_label.
  Reply submit_verdict(const std::string& id, const nlohmann::json& request, const std::string& reviewer) {
    std::unique_lock lock(mu_);
    if (!request.is_object()) return error_reply(400, "bad_request", "body must be a JSON object");
    const auto eid = request.find("event_id");
    if (eid == request.end() || !eid->is_string() || eid->get<std::string>().empty())
      return error_reply(422, "missing_event_id", "event_id is required");
    const std::string event_id = eid->get<std::string>();
    if (auto done = responses_.find(event_id); done != responses_.end()) return {200, done->second};
    auto it = items_.find(id);
    if (it == items_.end()) return error_reply(404, "not_found", "no extraction " + id);
    const auto v = request.find("verdict");
    if (v == request.end() || !v->is_string() || (*v != "accept" && *v != "correct"))
      return error_reply(422, "invalid_verdict", "verdict must be accept or correct");
    const bool correct = *v == "correct";
    const auto cl = request.find("corrected_label");
    const bool has_label = cl != request.end() && !cl->is_null();
    std::string label = it->second.extraction.predicted;
    if (correct) {
      if (!has_label || !cl->is_string()) return error_reply(422, "missing_label", "correct needs corrected_label");
      label = cl->get<std::string>();
      const auto& space = spaces_[corpus::index(it->second.extraction.attribute)];
      if (!space.contains(label))
        return error_reply(422, "invalid_label", "'" + label + "' is not a " +
                                                     std::string(corpus::slug(space.attribute)) + " class");
    } else if (has_label) {
      return error_reply(422, "unexpected_label", "corrected_label is only allowed with verdict=correct");
    }
    EventRecord e;
    e.event_id = event_id;
    e.kind = EventKind::Verdict;
    e.timestamp_ms = clock_();
    e.payload = {{"extraction_id", id}, {"verdict", correct ? "correct" : "accept"}, {"label", label},
                 {"reviewer", reviewer}};
    log_.append(e);
    apply(e);
    return {200, responses_.at(event_id)};
  }

  /// Re-runs inference with a new predictor, keeping verdicts, and records an
  /// inference event.
  void reload(const Predictor& predictor, const nlohmann::json& details = nlohmann::json::object()) {
    std::map<std::string, Extraction> fresh;
    for (const auto& p : patients_)
      for (auto a : corpus::kAllAttributes) fresh.emplace(extraction_id(p.patient_id, a), predictor(p, a));
    std::unique_lock lock(mu_);
    EventRecord e{"inference-" + std::to_string(++inference_seq_) + "-" + std::to_string(clock_()), EventKind::Inference,
                  details, clock_()};
    log_.append(e);
    ++inference_events_;
    for (auto& [id, x] : fresh) items_.at(id).extraction = std::move(x);
  }

  ojson stats() const {
    std::shared_lock lock(mu_);
    ojson j;
    std::map<ItemStatus, std::size_t> all;
    ojson by_attr = ojson::object();
    for (auto a : corpus::kAllAttributes) {
      std::map<ItemStatus, std::size_t> c;
      for (const auto& id : order_) {
        const auto& it = items_.at(id);
        if (it.extraction.attribute != a) continue;
        ++c[it.status];
        ++all[it.status];
      }
      by_attr[std::string(corpus::slug(a))] = {{"pending", c[ItemStatus::Pending]},
                                               {"accepted", c[ItemStatus::Accepted]},
                                               {"corrected", c[ItemStatus::Corrected]}};
    }
    j["total"] = items_.size();
    j["pending"] = all[ItemStatus::Pending];
    j["accepted"] = all[ItemStatus::Accepted];
    j["corrected"] = all[ItemStatus::Corrected];
    const auto reviewed = all[ItemStatus::Accepted] + all[ItemStatus::Corrected];
    j["correction_rate"] = reviewed ? static_cast<double>(all[ItemStatus::Corrected]) / static_cast<double>(reviewed) : 0.0;
    j["by_attribute"] = by_attr;
    ojson rv = ojson::object();
    for (const auto& [name, r] : reviewers_) {
      const double hours = static_cast<double>(r.last_ms - r.first_ms) / 3.6e6;
      rv[name] = {{"verdicts", r.verdicts},
                  {"first_ms", r.first_ms},
                  {"last_ms", r.last_ms},
                  {"per_hour", hours > 0.0 ? ojson(static_cast<double>(r.verdicts) / hours) : ojson(nullptr)}};
    }
    j["reviewers"] = rv;
    j["verdict_events"] = verdict_events_;
    j["inference_events"] = inference_events_;
    return j;
  }

  /// Line-delimited JSON, one row per reviewed item, ordered by
  /// (patient_id, attribute).
  std::string export_jsonl() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& id : order_) {
      const auto& it = items_.at(id);
      if (it.status == ItemStatus::Pending) continue;
      ojson row;
      row["patient_id"] = it.extraction.patient_id;
      row["attribute"] = std::string(corpus::slug(it.extraction.attribute));
      row["label"] = it.final_label;
      row["status"] = std::string(name(it.status));
      row["predicted"] = it.extraction.predicted;
      row["reviewer"] = it.reviewer;
      row["reviewed_at_ms"] = it.reviewed_at_ms;
      row["event_id"] = it.event_id;
      out += row.dump() + "\n";
    }
    return out;
  }

  /// Verdict state only (no predictions), for comparing two stores.
  ojson state_digest() const {
    std::shared_lock lock(mu_);
    ojson j = ojson::array();
    for (const auto& id : order_) {
      const auto& it = items_.at(id);
      j.push_back({id, std::string(name(it.status)), it.final_label, it.reviewer, it.reviewed_at_ms, it.event_id});
    }
    return j;
  }

 private:
  static void verify_rationale(const corpus::Patient& p, const ojson& r) {
    if (!r.contains("entries")) return;
    for (const auto& e : r["entries"]) {
      const auto doc_id = e.at("doc_id").get<std::string>();
      const corpus::ClinicalDocument* doc = nullptr;
      for (const auto& d : p.documents)
        if (d.doc_id == doc_id) doc = &d;
      const auto b = e.at("char_start").get<std::size_t>(), en = e.at("char_end").get<std::size_t>();
      if (!doc || en > doc->text.size() || b > en || doc->text.compare(b, en - b, e.at("snippet").get<std::string>()) != 0)
        throw std::runtime_error("rationale span does not match document " + doc_id);
    }
  }

  void run_inference(const Predictor& predictor) {
    for (const auto& p : patients_)
      for (auto a : corpus::kAllAttributes) {
        const auto id = extraction_id(p.patient_id, a);
        CurationItem item;
        item.extraction = predictor(p, a);
        items_.emplace(id, std::move(item));
        order_.push_back(id);
      }
  }

  void replay(const EventRecord& e) {
    if (e.kind == EventKind::Inference) {
      ++inference_events_;
      return;
    }
    if (responses_.count(e.event_id)) return;
    if (!items_.count(e.payload.value("extraction_id", std::string()))) return;  // item no longer served
    apply(e);
  }

  void apply(const EventRecord& e) {
    auto& it = items_.at(e.payload.at("extraction_id").get<std::string>());
    it.status = e.payload.at("verdict") == "correct" ? ItemStatus::Corrected : ItemStatus::Accepted;
    it.final_label = e.payload.at("label").get<std::string>();
    it.reviewer = e.payload.value("reviewer", std::string());
    it.reviewed_at_ms = e.timestamp_ms;
    it.event_id = e.event_id;
    auto& r = reviewers_[it.reviewer];
    if (r.verdicts == 0) r.first_ms = e.timestamp_ms;
    r.first_ms = std::min(r.first_ms, e.timestamp_ms);
    r.last_ms = std::max(r.last_ms, e.timestamp_ms);
    ++r.verdicts;
    ++verdict_events_;
    responses_[e.event_id] = to_json(it);
  }

  struct ReviewerStats {
    std::size_t verdicts = 0;
    std::int64_t first_ms = 0, last_ms = 0;
  };

  std::vector<corpus::Patient> patients_;
  std::map<std::string, std::size_t> patient_index_;
  corpus::LabelSpaces spaces_;
  EventLog log_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, CurationItem> items_;
  std::vector<std::string> order_;  // (patient_id, attribute)
  std::map<std::string, ojson> responses_;  // event_id -> reply body
  std::map<std::string, ReviewerStats> reviewers_;
  std::size_t verdict_events_ = 0, inference_events_ = 0, inference_seq_ = 0;
};

}  // namespace oncoabs::service
