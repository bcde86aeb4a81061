// SPDX-License-Identifier: Apache-2.0
#include "secm2m/proxy.hpp"

#include <thread>

#include <json.hpp>

#include "secm2m/config.hpp"

namespace secm2m::harness {

namespace {
std::size_t idx(Direction d) { return d == Direction::Downstream ? 0 : 1; }
}  // namespace

std::string_view to_string(Direction d) { return d == Direction::Downstream ? "downstream" : "upstream"; }

struct MitmProxy::Connection {
  std::size_t id = 0;
  Transport* client = nullptr;
  std::unique_ptr<TcpStream> server;
  std::mutex write_mutex[2];
  std::atomic<bool> alive{true};

  Transport& source(Direction d) { return d == Direction::Downstream ? *client : *server; }
  Transport& sink(Direction d) { return d == Direction::Downstream ? *server : *client; }
  void close() {
    alive = false;
    client->close();
    server->close();
  }
};

MitmProxy::MitmProxy(Endpoint target, std::size_t max_frame)
    : target_(std::move(target)), max_frame_(max_frame), tcp_([this](TcpStream& s) { serve(s); }) {}

MitmProxy::~MitmProxy() { stop(); }

void MitmProxy::start(const Endpoint& listen) { tcp_.start(listen); }

void MitmProxy::stop() {
  {
    std::lock_guard lock(mutex_);
    for (auto& c : connections_)
      if (c->server) c->server->close();
  }
  tcp_.stop();
}

void MitmProxy::serve(TcpStream& client) {
  auto c = std::make_shared<Connection>();
  c->client = &client;
  try {
    c->server = TcpStream::connect(target_);
  } catch (const Error&) {
    return;
  }
  {
    std::lock_guard lock(mutex_);
    c->id = connections_.size();
    connections_.push_back(c);
  }
  std::thread up([this, c] { relay(*c, Direction::Upstream); });
  relay(*c, Direction::Downstream);
  up.join();
}

void MitmProxy::relay(Connection& c, Direction d) {
  try {
    for (;;) {
      const Bytes frame = read_frame_bytes(c.source(d), max_frame_);
      {
        std::lock_guard lock(mutex_);
        append(received_[idx(d)], frame);
      }
      if (!rewriter_) {
        forward(c, d, frame, false, false);
        continue;
      }
      for (const Bytes& out : rewriter_(d, c.id, frame)) forward(c, d, out, false, out != frame);
    }
  } catch (const Error&) {
    // EOF, reset, or a frame the relay cannot delimit: tear the pair down.
  }
  c.close();
}

void MitmProxy::forward(Connection& c, Direction d, const Bytes& frame, bool injected, bool modified) {
  std::lock_guard write_lock(c.write_mutex[idx(d)]);
  c.sink(d).write_all(frame);
  std::lock_guard lock(mutex_);
  CapturedFrame f;
  f.direction = d;
  f.connection = c.id;
  f.offset = capture_[idx(d)].size();
  f.length = frame.size();
  f.t_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  f.injected = injected;
  f.modified = modified;
  frames_.push_back(f);
  append(capture_[idx(d)], frame);
}

void MitmProxy::inject(Direction d, const Bytes& frame, std::size_t connection) {
  std::shared_ptr<Connection> c;
  {
    std::lock_guard lock(mutex_);
    if (connection < connections_.size()) c = connections_[connection];
  }
  if (!c || !c->alive) throw Error(ErrorCode::ScenarioSetupFailure, "no live connection to inject into");
  try {
    forward(*c, d, frame, true, false);
  } catch (const Error& e) {
    throw Error(ErrorCode::ScenarioSetupFailure, std::string("injection failed: ") + e.what());
  }
}

std::size_t MitmProxy::connections() const {
  std::lock_guard lock(mutex_);
  return connections_.size();
}

Bytes MitmProxy::received(Direction d) const {
  std::lock_guard lock(mutex_);
  return received_[idx(d)];
}

Bytes MitmProxy::capture(Direction d) const {
  std::lock_guard lock(mutex_);
  return capture_[idx(d)];
}

std::vector<CapturedFrame> MitmProxy::frames() const {
  std::lock_guard lock(mutex_);
  return frames_;
}

std::vector<Bytes> MitmProxy::forwarded_frames(Direction d, std::size_t connection) const {
  std::lock_guard lock(mutex_);
  std::vector<Bytes> out;
  const Bytes& cap = capture_[idx(d)];
  for (const auto& f : frames_)
    if (f.direction == d && f.connection == connection && !f.injected)
      out.emplace_back(cap.begin() + static_cast<std::ptrdiff_t>(f.offset),
                       cap.begin() + static_cast<std::ptrdiff_t>(f.offset + f.length));
  return out;
}

void MitmProxy::write_capture(const std::filesystem::path& stem) const {
  std::lock_guard lock(mutex_);
  for (Direction d : {Direction::Downstream, Direction::Upstream}) {
    const Bytes& cap = capture_[idx(d)];
    write_text_file(stem.string() + "." + std::string(to_string(d)) + ".bin",
                    std::string_view(reinterpret_cast<const char*>(cap.data()), cap.size()));
  }
  std::string index;
  for (const auto& f : frames_) {
    nlohmann::json j = {{"direction", to_string(f.direction)}, {"connection", f.connection}, {"offset", f.offset},
                        {"length", f.length}, {"t_ms", f.t_ms}, {"injected", f.injected}, {"modified", f.modified}};
    index += j.dump() + "\n";
  }
  write_text_file(stem.string() + ".idx", index);
}

}  // namespace secm2m::harness
