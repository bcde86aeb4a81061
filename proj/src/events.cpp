// SPDX-License-Identifier: Apache-2.0
#include "secm2m/events.hpp"

#include <thread>

#include "secm2m/clock.hpp"

namespace secm2m {

namespace {
constexpr std::size_t kRetainedEvents = 200000;
}

void SteadyClock::sleep_for(Millis d) { std::this_thread::sleep_for(d); }

SteadyClock& SteadyClock::instance() {
  static SteadyClock clock;
  return clock;
}

void EventLog::emit(std::string name, nlohmann::json fields) {
  if (this == &null_event_log()) return;
  Event e;
  e.t_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  e.name = std::move(name);
  e.fields = std::move(fields);
  std::lock_guard lock(mutex_);
  ++counts_[e.name];
  if (sink_ != nullptr) *sink_ << format(e) << '\n' << std::flush;
  if (events_.size() < kRetainedEvents) events_.push_back(std::move(e));
}

std::size_t EventLog::count(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = counts_.find(name);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<Event> EventLog::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

void EventLog::clear() {
  std::lock_guard lock(mutex_);
  events_.clear();
  counts_.clear();
}

std::string EventLog::format(const Event& e) {
  nlohmann::json line = {{"t_ms", e.t_ms}, {"event", e.name}};
  for (auto it = e.fields.begin(); it != e.fields.end(); ++it) line[it.key()] = it.value();
  return line.dump();
}

EventLog& null_event_log() {
  static EventLog log;
  return log;
}

}  // namespace secm2m
