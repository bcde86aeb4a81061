// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <mutex>
#include <thread>
#include <vector>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "secm2m/bytes.hpp"
#include "secm2m/wire.hpp"

namespace secm2m {

/// Reliable ordered byte stream. read_exact and write_all may be called from
/// different threads; close() may be called from any thread and unblocks both.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws TransportError.
  virtual void write_all(ByteView data) = 0;
  /// Throws TransportError on EOF or failure, Timeout when the read timeout elapses.
  virtual void read_exact(std::span<std::uint8_t> out) = 0;
  virtual void close() = 0;
  /// Zero disables the timeout.
  virtual void set_read_timeout(std::chrono::milliseconds timeout) = 0;
};

/// Reads one complete frame, validating the prefix before allocating the body.
Bytes read_frame_bytes(Transport& transport, std::size_t max_frame = wire::kDefaultMaxFrame);

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port". Throws InvalidConfig.
Endpoint parse_endpoint(std::string_view text);

class TcpStream final : public Transport {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  /// Throws TransportError when the connection cannot be established.
  static std::unique_ptr<TcpStream> connect(const Endpoint& to,
                                            std::chrono::milliseconds timeout = std::chrono::seconds(5));

  void write_all(ByteView data) override;
  void read_exact(std::span<std::uint8_t> out) override;
  /// Reads whatever is available (at least one byte). Returns 0 on orderly EOF.
  std::size_t read_some(std::span<std::uint8_t> out);
  void close() override;
  void set_read_timeout(std::chrono::milliseconds timeout) override { read_timeout_ = timeout; }

 private:
  bool wait_readable();
  int fd_;
  std::chrono::milliseconds read_timeout_{0};
};

class TcpListener {
 public:
  /// Port 0 binds an ephemeral port; see port().
  explicit TcpListener(const Endpoint& at);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return {host_, port_}; }
  /// Returns nullptr after close() or when `timeout` elapses.
  std::unique_ptr<TcpStream> accept(std::chrono::milliseconds timeout = std::chrono::milliseconds(200));
  void close();

 private:
  int fd_;
  std::string host_;
  std::uint16_t port_ = 0;
  std::atomic<bool> closed_{false};
};

/// Listener running `handler` on its own thread for every accepted stream.
class TcpServer {
 public:
  using Handler = std::function<void(TcpStream&)>;

  explicit TcpServer(Handler handler) : handler_(std::move(handler)) {}
  ~TcpServer() { stop(); }
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  void start(const Endpoint& at);
  /// Closes the listener and every accepted stream, then joins all handlers.
  void stop();
  Endpoint endpoint() const;
  bool stopping() const { return stopping_.load(); }

 private:
  void accept_loop();

  Handler handler_;
  std::unique_ptr<TcpListener> listener_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::list<std::unique_ptr<TcpStream>> streams_;
  std::vector<std::thread> workers_;
};

/// In-process connected pair, used by unit tests in place of TCP.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_pipe();

}  // namespace secm2m
