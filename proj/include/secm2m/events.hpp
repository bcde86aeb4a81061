// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace secm2m {

struct Event {
  std::int64_t t_ms = 0;  // monotonic, relative to log creation
  std::string name;
  nlohmann::json fields;
};

/// Structured channel event stream. Each event is one JSON line
/// {"t_ms":..,"event":..,...}. Thread-safe.
class EventLog {
 public:
  EventLog() = default;
  /// Mirrors every event to `sink` as it is emitted.
  explicit EventLog(std::ostream& sink) : sink_(&sink) {}

  void emit(std::string name, nlohmann::json fields = nlohmann::json::object());

  std::size_t count(const std::string& name) const;
  std::vector<Event> events() const;
  void clear();

  static std::string format(const Event& e);

 private:
  mutable std::mutex mutex_;
  std::ostream* sink_ = nullptr;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::vector<Event> events_;
  std::map<std::string, std::size_t> counts_;
};

/// Shared do-nothing log for callers that do not care.
EventLog& null_event_log();

}  // namespace secm2m
