// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "secm2m/clock.hpp"
#include "secm2m/crypto.hpp"
#include "secm2m/error.hpp"
#include "secm2m/events.hpp"
#include "secm2m/profiles.hpp"
#include "secm2m/transport.hpp"
#include "secm2m/wire.hpp"

namespace secm2m {

using wire::SecurityMode;

struct ChannelConfig {
  ProfileId profile = ProfileId::Aes256Sha256RsaPss;
  SecurityMode security_mode = SecurityMode::SignAndEncrypt;
  std::optional<KeyPair> own_keypair;
  std::optional<Certificate> own_certificate;
  /// Pinned peer certificates; DER equality is the trust decision.
  std::vector<Certificate> trust_store;
  /// Client only: the server certificate the OPN request is encrypted to.
  /// Defaults to the single trust_store entry when unset.
  std::optional<Certificate> peer_certificate;
  std::uint32_t token_lifetime_ms = 3'600'000;
  /// Unset means unlimited.
  std::optional<std::uint32_t> rate_limit_per_s;
  std::uint32_t max_artificial_delay_ms = 1000;
  std::uint32_t handshake_timeout_ms = 10'000;
  std::size_t max_frame = wire::kDefaultMaxFrame;
  /// Highest sequence number a sender may use before a reset renewal is forced.
  std::uint64_t sequence_wrap_limit = 0xFFFFFFFFull;
  /// Test-only switch: when false, received sequence numbers are not checked.
  bool evaluate_sequence_numbers = true;
  RandomSource* rng = nullptr;  // defaults to SystemRandom

  /// Throws InvalidConfig: secured modes need a native-channel profile and an
  /// own key pair and certificate; rate_limit_per_s must not be 0.
  void validate() const;
  bool trusts(const Certificate& cert) const;
  const AlgorithmSuite& suite() const { return lookup_profile(profile); }
  RandomSource& random() const { return rng != nullptr ? *rng : SystemRandom::instance(); }
};

enum class ChannelPhase { Closed, Opening, Open, Renewing, Faulted };
std::string_view to_string(ChannelPhase phase);

struct SecurityToken {
  std::uint32_t token_id = 0;
  TimePoint created_at{};
  std::uint32_t lifetime_ms = 0;
  DirectionalKeys send_keys;
  DirectionalKeys receive_keys;

  TimePoint expires_at() const { return created_at + Millis(lifetime_ms); }
  bool expired(TimePoint now) const { return now > expires_at(); }
};

/// delay_ms = min(max_delay_ms, 1000 * (window_count - limit) / limit) when
/// window_count > limit, else 0.
Millis rate_limit_delay(std::size_t window_count, std::uint32_t limit, std::uint32_t max_delay_ms);

/// Trailing one-second window of admitted messages.
class RateLimiter {
 public:
  /// Throws InvalidConfig when limit_per_s is 0.
  RateLimiter(std::uint32_t limit_per_s, std::uint32_t max_delay_ms);

  /// Records a message arriving at `now` and returns the delay to apply before
  /// processing it. Messages are never dropped.
  Millis admit(TimePoint now);
  std::size_t window_count() const { return window_.size(); }
  std::uint32_t limit() const { return limit_; }

 private:
  std::uint32_t limit_;
  std::uint32_t max_delay_ms_;
  std::deque<TimePoint> window_;
};

struct ChannelState {
  ChannelPhase phase = ChannelPhase::Closed;
  std::uint32_t channel_id = 0;
  std::optional<SecurityToken> active_token;
  std::optional<SecurityToken> previous_token;
  TimePoint previous_valid_until{};
  std::uint64_t next_send_sequence = 1;
  std::uint64_t expected_receive_sequence = 1;
  std::optional<RateLimiter> rate_window;
};

/// State shared by every channel a server endpoint accepts. Thread-safe.
class ServerContext {
 public:
  static constexpr std::size_t kNonceCacheSize = 1024;

  std::uint32_t allocate_channel_id();
  /// Returns false when `nonce` is among the last 1024 remembered nonces.
  bool remember_nonce(ByteView nonce);

 private:
  std::mutex mutex_;
  std::uint32_t next_channel_id_ = 1;
  std::deque<Bytes> nonce_order_;
  std::set<Bytes> nonces_;
};

struct Delivery {
  std::uint32_t request_id = 0;
  Bytes payload;
};

/// True for the errors that reject a single received frame without
/// invalidating the channel.
bool is_frame_rejection(ErrorCode code);

/// One end of a secure channel. Runs over a transport it does not own.
///
/// send() may run concurrently with receive(); renew() must not overlap
/// receive() because it reads the renewal response from the transport itself.
class SecureChannel {
 public:
  SecureChannel(ChannelConfig config, Transport& transport, Clock& clock = SteadyClock::instance(),
                EventLog& events = null_event_log());

  /// Client handshake. On failure the phase is Faulted and the error rethrown.
  void open();
  /// Server handshake for one client.
  void accept(ServerContext& context);

  /// Emits one MSG frame and advances the send sequence by exactly one.
  /// Errors: ChannelNotOpen, TokenExpired, SequenceWrap.
  void send(std::uint32_t request_id, ByteView payload);

  /// Processes one received MSG frame. Rejections leave the channel Open.
  Bytes receive(const wire::SecureMessage& frame);

  /// Reads frames until a payload is delivered. Rejected frames are dropped,
  /// renewal requests are answered inline on the server side. Returns nullopt
  /// when the peer closes.
  std::optional<Delivery> receive();

  /// Client-side token renewal. With reset_sequence the counters restart at 1
  /// and the previous token is dropped immediately.
  void renew(bool reset_sequence = false);
  /// True once less than a quarter of the active token lifetime remains, or
  /// the send counter has passed the wrap limit.
  bool renewal_due() const;
  bool sequence_exhausted() const;

  /// Sends CLO (best effort) and moves to Closed.
  void close();

  ChannelState state() const;
  ChannelPhase phase() const;
  const ChannelConfig& config() const { return config_; }
  Transport& transport() const { return transport_; }
  bool is_server() const { return server_; }
  /// The authenticated peer certificate (absent in mode None).
  std::optional<Certificate> peer_certificate() const;

 private:
  struct Handshake {
    wire::OpenSecurityHeader header;
    wire::HandshakePayload payload;
    std::optional<Certificate> peer;
  };

  Bytes build_open_body(const wire::HandshakePayload& payload, const std::optional<Certificate>& receiver) const;
  Handshake parse_open_body(const wire::SecureMessage& frame, bool server_side) const;
  wire::SecureMessage read_handshake_frame();
  void send_error(ErrorCode code, std::string_view reason, std::uint32_t request_id);
  void handle_renew_request(const wire::SecureMessage& frame);
  void fault(ErrorCode code, const std::string& detail);
  SecurityToken make_token(std::uint32_t id, std::uint32_t lifetime_ms, ByteView local_nonce,
                           ByteView remote_nonce) const;
  void install_token(SecurityToken token, bool reset_sequence);
  wire::HandshakePayload handshake_payload(const ChannelNonce& nonce, std::uint32_t lifetime_ms,
                                           std::uint32_t token_id) const;

  ChannelConfig config_;
  Transport& transport_;
  Clock& clock_;
  EventLog& events_;
  bool server_ = false;
  ServerContext* context_ = nullptr;
  std::optional<Certificate> peer_;

  mutable std::mutex mutex_;
  ChannelState state_;
};

}  // namespace secm2m
