#include <gtest/gtest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <httplib.h>

#include "oncoabs/model/checkpoint.hpp"
#include "oncoabs/service/predictor.hpp"
#include "oncoabs/service/server.hpp"
#include "support/fixtures.hpp"

using namespace oncoabs;
using namespace oncoabs::service;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("oncoabs_svc_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::vector<corpus::Patient> ten_patients() {
  const auto& all = fixture::small_corpus().patients;
  return {all.begin(), all.begin() + 10};
}

// Predicts a fixed class chosen by patient id; `shift` changes every prediction.
Predictor fake_predictor(std::size_t shift = 0) {
  const auto spaces = fixture::small_corpus().label_spaces;
  return [spaces, shift](const corpus::Patient& p, corpus::AttributeKind a) {
    const auto& cls = spaces[corpus::index(a)].classes;
    std::size_t h = shift;
    for (char c : p.patient_id) h = h * 31 + static_cast<unsigned char>(c);
    Extraction x;
    x.patient_id = p.patient_id;
    x.attribute = a;
    x.predicted = cls[h % cls.size()];
    x.top = {{x.predicted, 0.7}, {cls[(h + 1) % cls.size()], 0.3}};
    x.model = "fake-" + std::to_string(shift);
    return x;
  };
}

struct Clock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'000'000);
  CurationStore::Clock fn() const {
    auto n = now;
    return [n] { return *n += 60'000; };  // one minute per call
  }
};

std::unique_ptr<CurationStore> make_store(const std::filesystem::path& log, Clock clock = {}, std::size_t shift = 0) {
  return std::make_unique<CurationStore>(ten_patients(), fixture::small_corpus().label_spaces, fake_predictor(shift), log,
                                         clock.fn());
}

json verdict(const std::string& event_id, const std::string& v, std::optional<std::string> label = std::nullopt) {
  json j{{"event_id", event_id}, {"verdict", v}};
  if (label) j["corrected_label"] = *label;
  return j;
}

std::string other_label(const CurationStore& s, const std::string& id) {
  const auto it = *s.item(id);
  for (const auto& c : fixture::small_corpus().label_spaces[corpus::index(it.extraction.attribute)].classes)
    if (c != it.extraction.predicted) return c;
  return "";
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += !l.empty();
  return n;
}

// Stats recomputed straight from the log file, independent of the store.
json stats_oracle(const std::filesystem::path& log, std::size_t total_items) {
  std::map<std::string, std::pair<std::string, std::string>> latest;  // id -> (verdict, reviewer)
  std::map<std::string, std::size_t> reviewer_counts;
  std::set<std::string> seen;
  std::size_t verdicts = 0, inference = 0;
  std::ifstream in(log);
  for (std::string line; std::getline(in, line);) {
    const auto j = json::parse(line);
    if (j["kind"] == "inference") {
      ++inference;
      continue;
    }
    if (!seen.insert(j["event_id"].get<std::string>()).second) continue;
    ++verdicts;
    latest[j["payload"]["extraction_id"]] = {j["payload"]["verdict"], j["payload"]["reviewer"]};
    ++reviewer_counts[j["payload"]["reviewer"].get<std::string>()];
  }
  std::size_t acc = 0, cor = 0;
  for (const auto& [id, v] : latest) (v.first == "accept" ? acc : cor)++;
  return {{"total", total_items}, {"pending", total_items - acc - cor}, {"accepted", acc}, {"corrected", cor},
          {"verdict_events", verdicts}, {"inference_events", inference}, {"reviewers", reviewer_counts}};
}

class HttpFixture {
 public:
  HttpFixture(CurationStore& store, CurationServer::PredictorFactory reload = {}) : server_(store, std::move(reload)) {
    port_ = server_.bind_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~HttpFixture() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  CurationServer& server() { return server_; }

 private:
  CurationServer server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(EventLog, RoundTripAndTornTail) {
  const auto dir = temp_dir("log");
  const auto path = dir / "events.jsonl";
  {
    EventLog log(path);
    log.append({"e1", EventKind::Verdict, {{"x", 1}}, 5});
    log.append({"e2", EventKind::Inference, json::object(), 6});
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"event_id":"e3","kind":"verdict")";  // crash mid-write
  }
  auto events = read_event_log(path);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].event_id, "e1");
  EXPECT_EQ(events[0].payload["x"], 1);
  EXPECT_EQ(events[1].kind, EventKind::Inference);
  {
    EventLog log(path);  // drops the torn tail before appending
    log.append({"e4", EventKind::Verdict, json::object(), 7});
  }
  events = read_event_log(path);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[2].event_id, "e4");
}

TEST(EventLog, CorruptMiddleLineIsAnError) {
  const auto path = temp_dir("corrupt") / "events.jsonl";
  std::ofstream(path) << "not json\n";
  EXPECT_THROW(read_event_log(path), FormatError);
}

TEST(CurationStore, FreshStoreQueuesEveryExtractionPending) {
  auto s = make_store(temp_dir("fresh") / "events.jsonl");
  EXPECT_EQ(s->item_count(), 80u);
  const auto p1 = s->queue({});
  EXPECT_EQ(p1.total, 80u);
  EXPECT_EQ(p1.items.size(), 50u);
  QueueFilter f;
  f.page = 2;
  const auto p2 = s->queue(f);
  EXPECT_EQ(p2.items.size(), 30u);
  f.page = 3;
  EXPECT_TRUE(s->queue(f).items.empty());
  for (const auto& it : p1.items) EXPECT_EQ(it.status, ItemStatus::Pending);
  // Ordered by (patient_id, attribute).
  EXPECT_EQ(extraction_id(p1.items[0].extraction.patient_id, p1.items[0].extraction.attribute),
            extraction_id(p1.items[0].extraction.patient_id, corpus::AttributeKind::Site));
  EXPECT_LT(p1.items[0].extraction.patient_id, p2.items[0].extraction.patient_id);
}

TEST(CurationStore, VerdictsValidateAndApply) {
  const auto log = temp_dir("verdict") / "events.jsonl";
  auto s = make_store(log);
  const auto id = s->queue({}).items[0].extraction.patient_id + ":site";
  EXPECT_EQ(s->submit_verdict("nope:site", verdict("e0", "accept"), "r").status, 404);
  EXPECT_EQ(s->submit_verdict(id, json{{"verdict", "accept"}}, "r").status, 422);
  EXPECT_EQ(s->submit_verdict(id, verdict("e1", "maybe"), "r").status, 422);
  EXPECT_EQ(s->submit_verdict(id, verdict("e1", "correct"), "r").status, 422);
  EXPECT_EQ(s->submit_verdict(id, verdict("e1", "correct", "C99.9-bogus"), "r").body["code"], "invalid_label");
  EXPECT_EQ(s->submit_verdict(id, verdict("e1", "accept", "C50.9"), "r").body["code"], "unexpected_label");
  EXPECT_EQ(s->submit_verdict(id, json::array(), "r").status, 400);
  EXPECT_EQ(line_count(log), 0u);  // nothing invalid reaches the log

  const auto ok = s->submit_verdict(id, verdict("e1", "accept"), "alice");
  ASSERT_EQ(ok.status, 200);
  EXPECT_EQ(ok.body["status"], "accepted");
  EXPECT_EQ(ok.body["reviewer"], "alice");
  EXPECT_EQ(s->item(id)->final_label, s->item(id)->extraction.predicted);

  const auto label = other_label(*s, id);
  const auto c = s->submit_verdict(id, verdict("e2", "correct", label), "bob");
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["status"], "corrected");
  EXPECT_EQ(c.body["corrected_label"], label);
  EXPECT_EQ(line_count(log), 2u);
}

TEST(CurationStore, DuplicateEventIdAppendsOnce) {
  const auto log = temp_dir("dup") / "events.jsonl";
  auto s = make_store(log);
  const auto id = s->queue({}).items[3].extraction.patient_id + ":histology";
  const auto label = other_label(*s, id);
  const auto first = s->submit_verdict(id, verdict("dup-1", "correct", label), "alice");
  const auto again = s->submit_verdict(id, verdict("dup-1", "correct", label), "alice");
  EXPECT_EQ(first.status, 200);
  EXPECT_EQ(again.status, 200);
  EXPECT_EQ(first.body.dump(), again.body.dump());
  EXPECT_EQ(line_count(log), 1u);
  EXPECT_EQ(s->stats()["verdict_events"], 1);
}

TEST(CurationStore, ReplayRestoresStateAndStatsMatchOracle) {
  const auto log = temp_dir("replay") / "events.jsonl";
  Clock clock;
  ojson digest, stats;
  {
    auto s = make_store(log, clock);
    const auto items = s->queue({}).items;
    for (std::size_t i = 0; i < items.size(); i += 3) {
      const auto id = extraction_id(items[i].extraction.patient_id, items[i].extraction.attribute);
      const std::string who = i % 2 ? "alice" : "bob";
      const auto r = i % 4 == 0 ? s->submit_verdict(id, verdict("ev" + std::to_string(i), "correct", other_label(*s, id)), who)
                                : s->submit_verdict(id, verdict("ev" + std::to_string(i), "accept"), who);
      ASSERT_EQ(r.status, 200) << r.body.dump();
    }
    // A re-review of an earlier item: latest verdict wins.
    const auto id0 = extraction_id(items[0].extraction.patient_id, items[0].extraction.attribute);
    ASSERT_EQ(s->submit_verdict(id0, verdict("late", "accept"), "carol").status, 200);
    digest = s->state_digest();
    stats = s->stats();
  }
  auto reopened = make_store(log, clock);
  EXPECT_EQ(reopened->state_digest(), digest);
  EXPECT_EQ(reopened->stats(), stats);

  const auto oracle = stats_oracle(log, 80);
  for (const char* k : {"total", "pending", "accepted", "corrected", "verdict_events", "inference_events"})
    EXPECT_EQ(json(stats[k]), oracle[k]) << k;
  for (const auto& [name, n] : oracle["reviewers"].items()) EXPECT_EQ(json(stats["reviewers"][name]["verdicts"]), n);
  const double reviewed = oracle["accepted"].get<double>() + oracle["corrected"].get<double>();
  EXPECT_DOUBLE_EQ(stats["correction_rate"].get<double>(), oracle["corrected"].get<double>() / reviewed);
  // One minute per clock tick: alice's rate follows from her first and last timestamps.
  const auto& a = stats["reviewers"]["alice"];
  const double hours = (a["last_ms"].get<double>() - a["first_ms"].get<double>()) / 3.6e6;
  EXPECT_DOUBLE_EQ(a["per_hour"].get<double>(), a["verdicts"].get<double>() / hours);
}

TEST(CurationStore, ExportListsOnlyReviewedItems) {
  auto s = make_store(temp_dir("export") / "events.jsonl");
  EXPECT_EQ(s->export_jsonl(), "");
  const auto items = s->queue({}).items;
  const auto a = extraction_id(items[1].extraction.patient_id, items[1].extraction.attribute);
  const auto b = extraction_id(items[0].extraction.patient_id, items[0].extraction.attribute);
  const auto label = other_label(*s, b);
  s->submit_verdict(a, verdict("x1", "accept"), "r");
  s->submit_verdict(b, verdict("x2", "correct", label), "r");
  std::istringstream in(s->export_jsonl());
  std::vector<json> rows;
  for (std::string l; std::getline(in, l);) rows.push_back(json::parse(l));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["status"], "corrected");  // export order follows the queue, not review time
  EXPECT_EQ(rows[0]["label"], label);
  EXPECT_EQ(rows[1]["status"], "accepted");
  EXPECT_EQ(rows[1]["label"], items[1].extraction.predicted);
}

TEST(CurationStore, ReloadKeepsVerdictsAndLogsInference) {
  const auto log = temp_dir("reload") / "events.jsonl";
  auto s = make_store(log);
  const auto id = s->queue({}).items[0].extraction.patient_id + ":site";
  s->submit_verdict(id, verdict("k1", "accept"), "r");
  s->reload(fake_predictor(7), {{"source", "test"}});
  EXPECT_EQ(s->item(id)->extraction.model, "fake-7");
  EXPECT_EQ(s->item(id)->status, ItemStatus::Accepted);
  EXPECT_EQ(s->stats()["inference_events"], 1);
  EXPECT_EQ(line_count(log), 2u);
}

TEST(CurationStore, SurvivesKillDuringVerdictStream) {
  const auto log = temp_dir("kill") / "events.jsonl";
  const auto ids = [&] {
    std::vector<std::string> out;
    auto s = make_store(log);
    QueueFilter all;
    all.page_size = 100;
    for (const auto& it : s->queue(all).items)
      out.push_back(extraction_id(it.extraction.patient_id, it.extraction.attribute));
    return out;
  }();
  int pipefd[2];
  ASSERT_EQ(::pipe(pipefd), 0);
  const pid_t child = ::fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    ::close(pipefd[0]);
    auto s = make_store(log);
    for (std::size_t i = 0;; ++i) {
      const auto r = s->submit_verdict(ids[i % ids.size()], verdict("kill-" + std::to_string(i), "accept"), "r");
      if (r.status != 200) ::_exit(3);
      const std::uint32_t acked = static_cast<std::uint32_t>(i + 1);
      if (::write(pipefd[1], &acked, sizeof acked) != sizeof acked) ::_exit(4);
    }
  }
  ::close(pipefd[1]);
  std::uint32_t acked = 0, v = 0;
  while (acked < 40 && ::read(pipefd[0], &v, sizeof v) == sizeof v) acked = v;
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  while (::read(pipefd[0], &v, sizeof v) == sizeof v) acked = v;  // acks that raced the kill
  ::close(pipefd[0]);
  ASSERT_TRUE(WIFSIGNALED(status));
  ASSERT_GE(acked, 40u);

  auto s = make_store(log);
  const auto stats = s->stats();
  // Every acknowledged verdict survived; at most one more was written before the kill.
  EXPECT_GE(stats["verdict_events"].get<std::size_t>(), acked);
  EXPECT_LE(stats["verdict_events"].get<std::size_t>(), acked + 1);
  // A resent event is recognised after the restart.
  const auto r = s->submit_verdict(ids[0], verdict("kill-0", "accept"), "r");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(s->stats()["verdict_events"], stats["verdict_events"]);
}

TEST(CurationHttp, QueuePagingAndFilters) {
  auto s = make_store(temp_dir("http_queue") / "events.jsonl");
  HttpFixture http(*s);
  auto c = http.client();
  auto r = c.Get("/api/queue");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(r->get_header_value(kTotalCountHeader), "80");
  auto body = json::parse(r->body);
  EXPECT_EQ(body["items"].size(), 50u);
  r = c.Get("/api/queue?page=2");
  EXPECT_EQ(json::parse(r->body)["items"].size(), 30u);
  r = c.Get("/api/queue?attribute=site");
  EXPECT_EQ(r->get_header_value(kTotalCountHeader), "10");
  for (const auto& it : json::parse(r->body)["items"]) EXPECT_EQ(it["attribute"], "site");
  r = c.Get("/api/queue?status=accepted");
  EXPECT_EQ(r->get_header_value(kTotalCountHeader), "0");
  for (const char* bad : {"/api/queue?attribute=spleen", "/api/queue?status=done", "/api/queue?page=0", "/api/queue?page=x"}) {
    r = c.Get(bad);
    EXPECT_EQ(r->status, 400) << bad;
    body = json::parse(r->body);
    EXPECT_TRUE(body.contains("code") && body.contains("message")) << bad;
  }
}

TEST(CurationHttp, PatientViewAndErrors) {
  auto s = make_store(temp_dir("http_patient") / "events.jsonl");
  HttpFixture http(*s);
  auto c = http.client();
  const auto pid = ten_patients()[0].patient_id;
  auto r = c.Get("/api/patients/" + pid);
  ASSERT_EQ(r->status, 200);
  const auto body = json::parse(r->body);
  EXPECT_EQ(body["patient_id"], pid);
  EXPECT_EQ(body["extractions"].size(), corpus::kAttributeCount);
  EXPECT_FALSE(body["documents"].empty());
  r = c.Get("/api/patients/NOPE");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(json::parse(r->body)["code"], "not_found");
}

TEST(CurationHttp, VerdictStatsExportReload) {
  const auto log = temp_dir("http_verdict") / "events.jsonl";
  auto s = make_store(log);
  HttpFixture http(*s, [] { return fake_predictor(3); });
  auto c = http.client();
  const auto id = ten_patients()[2].patient_id + ":site";
  const httplib::Headers who{{kReviewerHeader, "alice"}};
  auto r = c.Post("/api/extractions/" + id + "/verdict", who, verdict("h1", "accept").dump(), "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["reviewer"], "alice");
  auto again = c.Post("/api/extractions/" + id + "/verdict", who, verdict("h1", "accept").dump(), "application/json");
  EXPECT_EQ(again->body, r->body);
  EXPECT_EQ(line_count(log), 1u);
  r = c.Post("/api/extractions/" + id + "/verdict", who, "{", "application/json");
  EXPECT_EQ(r->status, 400);
  r = c.Post("/api/extractions/" + id + "/verdict", who, json{{"verdict", "accept"}}.dump(), "application/json");
  EXPECT_EQ(r->status, 422);
  r = c.Post("/api/extractions/x:site/verdict", who, verdict("h2", "accept").dump(), "application/json");
  EXPECT_EQ(r->status, 404);

  r = c.Get("/api/stats");
  auto st = json::parse(r->body);
  EXPECT_EQ(st["accepted"], 1);
  EXPECT_EQ(st["pending"], 79);
  r = c.Get("/api/export");
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/x-ndjson");
  EXPECT_EQ(json::parse(r->body)["patient_id"], ten_patients()[2].patient_id);

  r = c.Post("/api/admin/reload", "", "application/json");
  ASSERT_EQ(r->status, 202);
  http.server().jobs().wait_idle();
  EXPECT_EQ(s->item(id)->extraction.model, "fake-3");
  EXPECT_EQ(json::parse(c.Get("/api/stats")->body)["inference_events"], 1);
  EXPECT_EQ(json::parse(c.Get("/api/admin/reload")->body)["failed"], 0);
}

TEST(CurationHttp, ReloadWithoutSourceIsNotConfigured) {
  auto s = make_store(temp_dir("http_noreload") / "events.jsonl");
  HttpFixture http(*s);
  EXPECT_EQ(http.client().Post("/api/admin/reload", "", "application/json")->status, 501);
}

TEST(ModelPredictor, ExtractionsCarryVerifiedRationales) {
  const auto dir = temp_dir("predictor");
  const auto& b = fixture::small_corpus();
  const auto& vocab = fixture::small_vocab();
  text::save_vocab(dir / "vocab.json", vocab);
  model::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.n_classes = b.label_spaces[0].size();
  mc.embed_dim = 16;
  mc.gru_hidden = 8;
  mc.word_attn_dim = 8;
  mc.sent_attn_dim = 8;
  model::HanModel<float> m(mc);
  model::CheckpointMeta meta;
  meta.config = mc;
  meta.vocab_hash = vocab.hash();
  meta.attribute = "site";
  meta.labels = b.label_spaces[0].classes;
  meta.extra = {{"window", "-30:30"}, {"kinds", "path,rad,op"}};
  model::save_checkpoint(dir / model::checkpoint_filename("site", mc.encoder), m, meta);

  const auto pred = load_model_predictor(dir);
  EXPECT_EQ(pred.installed(), 1u);
  auto s = std::make_unique<CurationStore>(ten_patients(), b.label_spaces, pred, dir / "events.jsonl");
  for (const auto& p : ten_patients()) {
    const auto site = s->item(extraction_id(p.patient_id, corpus::AttributeKind::Site))->extraction;
    EXPECT_EQ(site.model, "site.context-free.ckpt");
    ASSERT_FALSE(site.top.empty());
    EXPECT_LE(site.top.size(), kTopClasses);
    for (std::size_t i = 1; i < site.top.size(); ++i) EXPECT_GE(site.top[i - 1].probability, site.top[i].probability);
    EXPECT_EQ(site.predicted, site.top[0].code);
    const auto hist = s->item(extraction_id(p.patient_id, corpus::AttributeKind::Histology))->extraction;
    EXPECT_EQ(hist.model, "none");
    EXPECT_EQ(hist.predicted, corpus::kNotDocumented);
    ASSERT_TRUE(s->patient_view(p.patient_id).has_value());  // throws if a snippet mismatches
  }
  std::filesystem::remove(dir / "vocab.json");
  try {
    load_model_predictor(dir);
    FAIL() << "expected a missing-artifact error";
  } catch (const MissingArtifactError& e) {
    EXPECT_EQ(e.producer(), "build-vocab");
  }
}
