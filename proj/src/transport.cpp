// SPDX-License-Identifier: Apache-2.0
#include "secm2m/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "secm2m/error.hpp"

namespace secm2m {

Bytes read_frame_bytes(Transport& transport, std::size_t max_frame) {
  Bytes frame(wire::kPrefixBytes);
  transport.read_exact(frame);
  const std::size_t total = wire::frame_length(frame, max_frame);
  frame.resize(total);
  transport.read_exact(std::span(frame).subspan(wire::kPrefixBytes));
  return frame;
}

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size())
    throw Error(ErrorCode::InvalidConfig, "expected host:port, got '" + std::string(text) + "'");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(std::string(text.substr(colon + 1)), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad port in '" + std::string(text) + "'");
  }
  if (port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw Error(ErrorCode::TransportError, "cannot resolve " + ep.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

TcpStream::TcpStream(int fd) : fd_(fd) {
  int one = 1;
  setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpStream::connect(const Endpoint& to, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(to);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorCode::TransportError, errno_text("socket"));
  auto stream = std::make_unique<TcpStream>(fd);

  const int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) throw Error(ErrorCode::TransportError, errno_text("connect") + " " + to.to_string());
    pollfd pfd{fd, POLLOUT, 0};
    if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0)
      throw Error(ErrorCode::TransportError, "connect timeout " + to.to_string());
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      throw Error(ErrorCode::TransportError, errno_text("connect") + " " + to.to_string());
    }
  }
  fcntl(fd, F_SETFL, flags);
  return stream;
}

void TcpStream::write_all(ByteView data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::TransportError, errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool TcpStream::wait_readable() {
  if (read_timeout_.count() == 0) return true;
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const int rc = ::poll(&pfd, 1, static_cast<int>(read_timeout_.count()));
    if (rc < 0 && errno == EINTR) continue;
    return rc > 0;
  }
}

std::size_t TcpStream::read_some(std::span<std::uint8_t> out) {
  if (!wait_readable()) throw Error(ErrorCode::Timeout, "read");
  for (;;) {
    const ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::TransportError, errno_text("recv"));
    }
    return static_cast<std::size_t>(n);
  }
}

void TcpStream::read_exact(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const std::size_t n = read_some(out.subspan(got));
    if (n == 0) throw Error(ErrorCode::TransportError, "connection closed by peer");
    got += n;
  }
}

void TcpStream::close() { ::shutdown(fd_, SHUT_RDWR); }

TcpListener::TcpListener(const Endpoint& at) : host_(at.host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error(ErrorCode::TransportError, errno_text("socket"));
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(at);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
    const std::string what = errno_text("bind/listen") + " " + at.to_string();
    ::close(fd_);
    throw Error(ErrorCode::TransportError, what);
  }
  socklen_t len = sizeof addr;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { ::close(fd_); }

std::unique_ptr<TcpStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  if (closed_) return nullptr;
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0 || closed_) return nullptr;
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return nullptr;
  return std::make_unique<TcpStream>(fd);
}

void TcpListener::close() {
  closed_ = true;
  ::shutdown(fd_, SHUT_RDWR);
}

void TcpServer::start(const Endpoint& at) {
  listener_ = std::make_unique<TcpListener>(at);
  acceptor_ = std::thread([this] { accept_loop(); });
}

Endpoint TcpServer::endpoint() const { return listener_ ? listener_->endpoint() : Endpoint{}; }

void TcpServer::accept_loop() {
  while (!stopping_) {
    std::unique_ptr<TcpStream> stream = listener_->accept();
    if (!stream) continue;
    std::lock_guard lock(mutex_);
    if (stopping_) break;
    streams_.push_back(std::move(stream));
    TcpStream* raw = streams_.back().get();
    workers_.emplace_back([this, raw] {
      try {
        handler_(*raw);
      } catch (const std::exception&) {
        // handlers report their own failures
      }
      raw->close();
    });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listener_) listener_->close();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    for (auto& s : streams_) s->close();
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
}

// --- in-memory pipe ----------------------------------------------------------

namespace {

struct Channel {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool closed = false;
};

class MemoryEnd final : public Transport {
 public:
  MemoryEnd(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~MemoryEnd() override { close(); }

  void write_all(ByteView data) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw Error(ErrorCode::TransportError, "pipe closed");
    out_->data.insert(out_->data.end(), data.begin(), data.end());
    out_->cv.notify_all();
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mutex);
    auto ready = [&] { return in_->data.size() >= out.size() || in_->closed; };
    if (timeout_.count() == 0) {
      in_->cv.wait(lock, ready);
    } else if (!in_->cv.wait_for(lock, timeout_, ready)) {
      throw Error(ErrorCode::Timeout, "read");
    }
    if (in_->data.size() < out.size()) throw Error(ErrorCode::TransportError, "pipe closed");
    std::copy_n(in_->data.begin(), out.size(), out.begin());
    in_->data.erase(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(out.size()));
  }

  void close() override {
    for (auto* ch : {in_.get(), out_.get()}) {
      std::lock_guard lock(ch->mutex);
      ch->closed = true;
      ch->cv.notify_all();
    }
  }

  void set_read_timeout(std::chrono::milliseconds timeout) override { timeout_ = timeout; }

 private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
  std::chrono::milliseconds timeout_{0};
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_pipe() {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_unique<MemoryEnd>(b_to_a, a_to_b), std::make_unique<MemoryEnd>(a_to_b, b_to_a)};
}

}  // namespace secm2m
