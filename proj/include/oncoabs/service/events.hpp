#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"

namespace oncoabs::service {

enum class EventKind { Verdict, Inference };

inline std::string_view name(EventKind k) { return k == EventKind::Verdict ? "verdict" : "inference"; }

inline EventKind parse_event_kind(std::string_view s) {
  if (s == "verdict") return EventKind::Verdict;
  if (s == "inference") return EventKind::Inference;
  throw FormatError("unknown event kind '" + std::string(s) + "'");
}

struct EventRecord {
  std::string event_id;
  EventKind kind = EventKind::Verdict;
  nlohmann::json payload = nlohmann::json::object();
  std::int64_t timestamp_ms = 0;
};

inline nlohmann::ordered_json to_json(const EventRecord& e) {
  nlohmann::ordered_json j;
  j["event_id"] = e.event_id;
  j["kind"] = std::string(name(e.kind));
  j["timestamp_ms"] = e.timestamp_ms;
  j["payload"] = e.payload;
  return j;
}

inline EventRecord event_from_json(const nlohmann::json& j) {
  return {j.at("event_id").get<std::string>(), parse_event_kind(j.at("kind").get<std::string>()), j.at("payload"),
          j.at("timestamp_ms").get<std::int64_t>()};
}

/// Reads an event log. A final line without its newline is a torn write from
/// a crash and is ignored; any other malformed line is an error.
inline std::vector<EventRecord> read_event_log(const std::filesystem::path& path) {
  std::vector<EventRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0, line_no = 0;
  while (pos < all.size()) {
    const auto nl = all.find('\n', pos);
    if (nl == std::string::npos) break;
    ++line_no;
    const std::string_view line(all.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Append-only line-delimited JSON log. Appends are serialized and reach the
/// disk (fsync) before append() returns.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    drop_torn_tail();
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open event log " + path_.string() + ": " + std::strerror(errno));
  }
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  ~EventLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::filesystem::path& path() const { return path_; }

  void append(const EventRecord& e) {
    const std::string line = to_json(e).dump() + "\n";
    std::lock_guard lock(mu_);
    std::size_t off = 0;
    while (off < line.size()) {
      const auto n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error("event log write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw std::runtime_error("event log fsync failed: " + std::string(std::strerror(errno)));
  }

 private:
  void drop_torn_tail() {
    if (!std::filesystem::exists(path_)) return;
    const auto size = std::filesystem::file_size(path_);
    if (size == 0) return;
    std::ifstream in(path_, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto last_nl = all.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep < all.size()) std::filesystem::resize_file(path_, keep);
  }

  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace oncoabs::service
