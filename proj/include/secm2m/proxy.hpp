// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "secm2m/transport.hpp"
#include "secm2m/wire.hpp"

namespace secm2m::harness {

/// Downstream runs from the connecting side (controller, near gateway) to the
/// listening side (device, far gateway); upstream is the reverse.
enum class Direction { Downstream, Upstream };
std::string_view to_string(Direction d);

struct CapturedFrame {
  Direction direction = Direction::Downstream;
  std::size_t connection = 0;
  std::size_t offset = 0;  // into capture(direction)
  std::size_t length = 0;
  std::int64_t t_ms = 0;
  bool injected = false;
  bool modified = false;
};

/// Frame-aware TCP man-in-the-middle relay. Every complete frame read from
/// either side is passed to the rewriter, which returns the frames to forward
/// in its place (default: the frame itself). Everything forwarded is captured.
class MitmProxy {
 public:
  using Rewriter = std::function<std::vector<Bytes>(Direction, std::size_t connection, const Bytes& frame)>;

  explicit MitmProxy(Endpoint target, std::size_t max_frame = wire::kDefaultMaxFrame);
  ~MitmProxy();
  MitmProxy(const MitmProxy&) = delete;
  MitmProxy& operator=(const MitmProxy&) = delete;

  /// Set before start().
  void set_rewriter(Rewriter r) { rewriter_ = std::move(r); }
  void start(const Endpoint& listen);
  void stop();
  Endpoint endpoint() const { return tcp_.endpoint(); }

  /// Writes `frame` into the given direction of connection `connection`
  /// (0-based, accept order) between relayed frames. Throws
  /// ScenarioSetupFailure when that connection is gone.
  void inject(Direction d, const Bytes& frame, std::size_t connection = 0);

  std::size_t connections() const;
  /// Bytes as read from the sender, before any rewriting.
  Bytes received(Direction d) const;
  /// Bytes as delivered to the receiver, injections included.
  Bytes capture(Direction d) const;
  std::vector<CapturedFrame> frames() const;
  /// Frames forwarded in `d` (not injected), in order.
  std::vector<Bytes> forwarded_frames(Direction d, std::size_t connection = 0) const;
  /// Writes <stem>.<direction>.bin raw captures and a <stem>.idx JSON-lines
  /// frame index.
  void write_capture(const std::filesystem::path& stem) const;

 private:
  struct Connection;
  void serve(TcpStream& client);
  void relay(Connection& c, Direction d);
  void forward(Connection& c, Direction d, const Bytes& frame, bool injected, bool modified);

  Endpoint target_;
  std::size_t max_frame_;
  Rewriter rewriter_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();

  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Connection>> connections_;
  Bytes received_[2];
  Bytes capture_[2];
  std::vector<CapturedFrame> frames_;
  TcpServer tcp_;
};

}  // namespace secm2m::harness
