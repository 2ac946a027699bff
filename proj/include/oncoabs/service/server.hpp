#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "oncoabs/service/store.hpp"

namespace oncoabs::service {

inline constexpr const char* kReviewerHeader = "X-Reviewer-Id";
inline constexpr const char* kTotalCountHeader = "X-Total-Count";

/// Runs reload jobs one at a time off the request threads; at most
/// `capacity` jobs wait.
class JobQueue {
 public:
  explicit JobQueue(std::size_t capacity = 4) : capacity_(capacity), worker_([this] { loop(); }) {}
  ~JobQueue() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  /// Job number, or 0 when the queue is full.
  std::size_t submit(std::function<void()> job) {
    std::lock_guard lock(mu_);
    if (pending_.size() >= capacity_) return 0;
    pending_.emplace_back(++submitted_, std::move(job));
    cv_.notify_one();
    return submitted_;
  }

  nlohmann::ordered_json status() const {
    std::lock_guard lock(mu_);
    return {{"submitted", submitted_}, {"completed", completed_}, {"failed", failed_}, {"queued", pending_.size()},
            {"last_error", last_error_}};
  }

  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_.wait(lock, [&] { return pending_.empty() && !running_; });
  }

 private:
  void loop() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return stop_ || !pending_.empty(); });
      if (pending_.empty()) return;
      auto job = std::move(pending_.front().second);
      pending_.pop_front();
      running_ = true;
      lock.unlock();
      std::string err;
      try {
        job();
      } catch (const std::exception& e) {
        err = e.what();
      }
      lock.lock();
      running_ = false;
      ++completed_;
      if (!err.empty()) {
        ++failed_;
        last_error_ = err;
      }
      idle_.notify_all();
    }
  }

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_, idle_;
  std::deque<std::pair<std::size_t, std::function<void()>>> pending_;
  std::size_t submitted_ = 0, completed_ = 0, failed_ = 0;
  std::string last_error_;
  bool running_ = false, stop_ = false;
  std::thread worker_;
};

/// HTTP front end of a CurationStore. `reload` builds a fresh predictor (for
/// example from a newly installed checkpoint directory).
class CurationServer {
 public:
  using PredictorFactory = std::function<Predictor()>;

  CurationServer(CurationStore& store, PredictorFactory reload = {}) : store_(store), reload_(std::move(reload)) {
    routes();
  }

  httplib::Server& http() { return http_; }

  bool listen(const std::string& host, int port) { return http_.listen(host, port); }
  int bind_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() { http_.wait_until_ready(); }
  JobQueue& jobs() { return jobs_; }

 private:
  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  static Reply bad_request(const std::string& m) { return error_reply(400, "bad_request", m); }

  void routes() {
    http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send(res, error_reply(500, "internal", what));
    });

    http_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      QueueFilter f;
      if (req.has_param("attribute")) {
        const auto a = corpus::try_parse_attribute(req.get_param_value("attribute"));
        if (!a) return send(res, bad_request("unknown attribute '" + req.get_param_value("attribute") + "'"));
        f.attribute = a;
      }
      if (req.has_param("status")) {
        const auto s = parse_status(req.get_param_value("status"));
        if (!s) return send(res, bad_request("unknown status '" + req.get_param_value("status") + "'"));
        f.status = s;
      }
      for (auto [key, target, max] : {std::tuple{"page", &f.page, std::size_t{1} << 40}, std::tuple{"page_size", &f.page_size, std::size_t{1000}}}) {
        if (!req.has_param(key)) continue;
        try {
          const auto& raw = req.get_param_value(key);
          std::size_t used = 0;
          const auto v = std::stoull(raw, &used);
          if (used != raw.size() || v < 1 || v > max) throw std::out_of_range(key);
          *target = static_cast<std::size_t>(v);
        } catch (const std::logic_error&) {
          return send(res, bad_request(std::string(key) + " must be a positive integer"));
        }
      }
      const auto page = store_.queue(f);
      nlohmann::ordered_json items = nlohmann::ordered_json::array();
      for (const auto& it : page.items) items.push_back(to_json(it));
      res.set_header(kTotalCountHeader, std::to_string(page.total));
      send(res, {200, {{"page", f.page}, {"page_size", f.page_size}, {"total", page.total}, {"items", items}}});
    });

    http_.Get("/api/patients/:id", [this](const httplib::Request& req, httplib::Response& res) {
      const auto& id = req.path_params.at("id");
      auto view = store_.patient_view(id);
      if (!view) return send(res, error_reply(404, "not_found", "no patient " + id));
      send(res, {200, std::move(*view)});
    });

    http_.Post("/api/extractions/:id/verdict", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return send(res, bad_request("body is not valid JSON"));
      }
      const std::string reviewer = req.has_header(kReviewerHeader) ? req.get_header_value(kReviewerHeader) : "anonymous";
      send(res, store_.submit_verdict(req.path_params.at("id"), body, reviewer));
    });

    http_.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) { send(res, {200, store_.stats()}); });

    http_.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 200;
      res.set_content(store_.export_jsonl(), "application/x-ndjson");
    });

    http_.Post("/api/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
      if (!reload_) return send(res, error_reply(501, "not_configured", "no checkpoint source configured"));
      const auto job = jobs_.submit([this] { store_.reload(reload_(), {{"source", "admin reload"}}); });
      if (job == 0) return send(res, error_reply(503, "busy", "reload queue is full"));
      send(res, {202, {{"job", job}}});
    });

    http_.Get("/api/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
      send(res, {200, jobs_.status()});
    });
  }

  CurationStore& store_;
  PredictorFactory reload_;
  JobQueue jobs_;
  httplib::Server http_;
};

}  // namespace oncoabs::service
