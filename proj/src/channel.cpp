// SPDX-License-Identifier: Apache-2.0
#include "secm2m/channel.hpp"

#include <algorithm>

#include "secm2m/error.hpp"

namespace secm2m {

using wire::MsgType;
using wire::SecureMessage;

std::string_view to_string(ChannelPhase phase) {
  switch (phase) {
    case ChannelPhase::Closed: return "Closed";
    case ChannelPhase::Opening: return "Opening";
    case ChannelPhase::Open: return "Open";
    case ChannelPhase::Renewing: return "Renewing";
    case ChannelPhase::Faulted: return "Faulted";
  }
  return "?";
}

void ChannelConfig::validate() const {
  if (rate_limit_per_s && *rate_limit_per_s == 0) throw Error(ErrorCode::InvalidConfig, "rate_limit_per_s = 0");
  if (token_lifetime_ms == 0) throw Error(ErrorCode::InvalidConfig, "token_lifetime_ms = 0");
  if (security_mode == SecurityMode::None) return;
  const auto& s = suite();
  if (!s.native())
    throw Error(ErrorCode::InvalidConfig, std::string(s.name) + " is transport-delegated; no native channel");
  if (!own_keypair || !own_certificate)
    throw Error(ErrorCode::InvalidConfig, "secured modes need an own key pair and certificate");
  validate_asym_key_length(s, own_keypair->modulus_bits());
}

bool ChannelConfig::trusts(const Certificate& cert) const {
  return std::find(trust_store.begin(), trust_store.end(), cert) != trust_store.end();
}

Millis rate_limit_delay(std::size_t window_count, std::uint32_t limit, std::uint32_t max_delay_ms) {
  if (limit == 0) throw Error(ErrorCode::InvalidConfig, "rate_limit_per_s = 0");
  if (window_count <= limit) return Millis(0);
  const std::uint64_t excess = window_count - limit;
  return Millis(std::min<std::uint64_t>(max_delay_ms, 1000 * excess / limit));
}

RateLimiter::RateLimiter(std::uint32_t limit_per_s, std::uint32_t max_delay_ms)
    : limit_(limit_per_s), max_delay_ms_(max_delay_ms) {
  if (limit_per_s == 0) throw Error(ErrorCode::InvalidConfig, "rate_limit_per_s = 0");
}

Millis RateLimiter::admit(TimePoint now) {
  while (!window_.empty() && now - window_.front() >= std::chrono::seconds(1)) window_.pop_front();
  window_.push_back(now);
  return rate_limit_delay(window_.size(), limit_, max_delay_ms_);
}

std::uint32_t ServerContext::allocate_channel_id() {
  std::lock_guard lock(mutex_);
  return next_channel_id_++;
}

bool ServerContext::remember_nonce(ByteView nonce) {
  std::lock_guard lock(mutex_);
  Bytes key(nonce.begin(), nonce.end());
  if (nonces_.count(key) != 0) return false;
  nonces_.insert(key);
  nonce_order_.push_back(std::move(key));
  if (nonce_order_.size() > kNonceCacheSize) {
    nonces_.erase(nonce_order_.front());
    nonce_order_.pop_front();
  }
  return true;
}

bool is_frame_rejection(ErrorCode code) {
  switch (code) {
    case ErrorCode::ReplayDetected:
    case ErrorCode::OutOfOrder:
    case ErrorCode::SignatureInvalid:
    case ErrorCode::PaddingInvalid:
    case ErrorCode::BodyTooShort:
    case ErrorCode::UnknownToken:
    case ErrorCode::TokenExpired:
      return true;
    default:
      return false;
  }
}

SecureChannel::SecureChannel(ChannelConfig config, Transport& transport, Clock& clock, EventLog& events)
    : config_(std::move(config)), transport_(transport), clock_(clock), events_(events) {}

ChannelState SecureChannel::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

ChannelPhase SecureChannel::phase() const {
  std::lock_guard lock(mutex_);
  return state_.phase;
}

std::optional<Certificate> SecureChannel::peer_certificate() const {
  std::lock_guard lock(mutex_);
  return peer_;
}

void SecureChannel::fault(ErrorCode code, const std::string& detail) {
  {
    std::lock_guard lock(mutex_);
    state_.phase = ChannelPhase::Faulted;
  }
  events_.emit("handshake_rejected", {{"channel", state_.channel_id},
                                      {"role", server_ ? "server" : "client"},
                                      {"error", std::string(to_string(code))},
                                      {"detail", detail}});
}

wire::HandshakePayload SecureChannel::handshake_payload(const ChannelNonce& nonce, std::uint32_t lifetime_ms,
                                                        std::uint32_t token_id) const {
  wire::HandshakePayload p;
  p.profile_name = std::string(profile_name(config_.profile));
  if (config_.security_mode != SecurityMode::None) p.sender_certificate = config_.own_certificate->der();
  p.nonce = nonce.bytes();
  p.requested_lifetime_ms = lifetime_ms;
  p.security_mode = config_.security_mode;
  p.token_id = token_id;
  return p;
}

Bytes SecureChannel::build_open_body(const wire::HandshakePayload& payload,
                                     const std::optional<Certificate>& receiver) const {
  wire::OpenSecurityHeader header;
  header.profile_name = payload.profile_name;
  header.sender_certificate = payload.sender_certificate;
  if (receiver) header.receiver_thumbprint = receiver->thumbprint();
  Bytes body = wire::encode_security_header(header);
  const Bytes encoded = wire::encode_handshake(payload);
  if (config_.security_mode == SecurityMode::None) {
    append(body, encoded);
  } else {
    append(body, asymmetric_protect(receiver->public_key(), *config_.own_keypair, config_.suite(), encoded));
  }
  return body;
}

SecureChannel::Handshake SecureChannel::parse_open_body(const SecureMessage& frame, bool server_side) const {
  Handshake hs;
  std::size_t used = 0;
  try {
    std::tie(hs.header, used) = wire::decode_security_header(frame.body);
  } catch (const Error& e) {
    throw Error(ErrorCode::HandshakeCryptoFailure, e.what());
  }
  if (hs.header.profile_name != profile_name(config_.profile))
    throw Error(ErrorCode::ProfileMismatch, "peer offered " + hs.header.profile_name);
  ByteView rest = ByteView(frame.body).subspan(used);

  if (config_.security_mode == SecurityMode::None) {
    if (!hs.header.sender_certificate.empty())
      throw Error(ErrorCode::ProfileMismatch, "peer uses a secured mode, this endpoint mode None");
    try {
      hs.payload = wire::decode_handshake(rest);
    } catch (const Error& e) {
      throw Error(ErrorCode::HandshakeCryptoFailure, e.what());
    }
  } else {
    if (hs.header.sender_certificate.empty())
      throw Error(ErrorCode::ProfileMismatch, "peer offered security mode None");
    Certificate cert = Certificate::from_der(hs.header.sender_certificate);
    if (!config_.trusts(cert)) throw Error(ErrorCode::CertificateUntrusted, "'" + cert.common_name() + "' not pinned");
    if (!server_side && config_.peer_certificate && !(cert == *config_.peer_certificate))
      throw Error(ErrorCode::CertificateUntrusted, "responder is not the configured server");
    if (!constant_time_equal(hs.header.receiver_thumbprint, config_.own_certificate->thumbprint()))
      throw Error(ErrorCode::HandshakeCryptoFailure, "message not addressed to this certificate");
    try {
      validate_asym_key_length(config_.suite(), cert.public_key().modulus_bits());
      hs.payload = wire::decode_handshake(
          asymmetric_unprotect(*config_.own_keypair, cert.public_key(), config_.suite(), rest));
    } catch (const Error& e) {
      throw Error(ErrorCode::HandshakeCryptoFailure, e.what());
    }
    if (hs.payload.sender_certificate != hs.header.sender_certificate)
      throw Error(ErrorCode::HandshakeCryptoFailure, "certificate differs from signed payload");
    hs.peer = std::move(cert);
  }
  if (hs.payload.profile_name != hs.header.profile_name)
    throw Error(ErrorCode::HandshakeCryptoFailure, "profile differs from signed payload");
  if (hs.payload.security_mode != config_.security_mode)
    throw Error(ErrorCode::ProfileMismatch,
                "peer mode " + std::string(wire::to_string(hs.payload.security_mode)) + ", this endpoint " +
                    std::string(wire::to_string(config_.security_mode)));
  return hs;
}

SecureMessage SecureChannel::read_handshake_frame() {
  transport_.set_read_timeout(Millis(config_.handshake_timeout_ms));
  Bytes raw;
  try {
    raw = read_frame_bytes(transport_, config_.max_frame);
  } catch (const Error& e) {
    transport_.set_read_timeout(Millis(0));
    if (e.code() == ErrorCode::TransportError || e.code() == ErrorCode::Timeout) throw;
    throw Error(ErrorCode::HandshakeCryptoFailure, e.what());
  }
  transport_.set_read_timeout(Millis(0));
  try {
    return wire::decode_frame(raw, config_.max_frame).msg;
  } catch (const Error& e) {
    throw Error(ErrorCode::HandshakeCryptoFailure, e.what());
  }
}

void SecureChannel::send_error(ErrorCode code, std::string_view reason, std::uint32_t request_id) {
  SecureMessage err;
  err.msg_type = MsgType::Error;
  err.channel_id = state_.channel_id;
  err.request_id = request_id;
  err.body = wire::encode_error_body(static_cast<std::uint32_t>(code), reason);
  try {
    std::lock_guard lock(mutex_);
    transport_.write_all(wire::encode_frame(err, config_.max_frame));
  } catch (const Error&) {
    // peer already gone
  }
}

SecurityToken SecureChannel::make_token(std::uint32_t id, std::uint32_t lifetime_ms, ByteView local_nonce,
                                        ByteView remote_nonce) const {
  SecurityToken token;
  token.token_id = id;
  token.created_at = clock_.now();
  token.lifetime_ms = lifetime_ms;
  if (config_.security_mode != SecurityMode::None) {
    TokenKeys keys = derive_token_keys(config_.suite(), local_nonce, remote_nonce);
    token.send_keys = std::move(keys.send);
    token.receive_keys = std::move(keys.receive);
  }
  return token;
}

void SecureChannel::install_token(SecurityToken token, bool reset_sequence) {
  // caller holds mutex_
  if (state_.active_token && !reset_sequence) {
    const auto overlap = Millis(state_.active_token->lifetime_ms / 4);
    state_.previous_token = std::move(state_.active_token);
    state_.previous_valid_until = clock_.now() + overlap;
  } else {
    state_.previous_token.reset();
  }
  state_.active_token = std::move(token);
  if (reset_sequence) {
    state_.next_send_sequence = 1;
    state_.expected_receive_sequence = 1;
  }
}

void SecureChannel::open() {
  server_ = false;
  try {
    config_.validate();
    if (config_.security_mode != SecurityMode::None && !config_.peer_certificate) {
      if (config_.trust_store.size() != 1)
        throw Error(ErrorCode::InvalidConfig, "client needs peer_certificate or exactly one pinned certificate");
      config_.peer_certificate = config_.trust_store.front();
    }
  } catch (const Error& e) {
    fault(e.code(), e.what());
    throw;
  }
  {
    std::lock_guard lock(mutex_);
    state_ = ChannelState{};
    state_.phase = ChannelPhase::Opening;
  }
  try {
    const ChannelNonce nonce = generate_nonce(config_.suite(), config_.random());
    SecureMessage request;
    request.msg_type = MsgType::Open;
    request.request_id = 1;
    request.body = build_open_body(handshake_payload(nonce, config_.token_lifetime_ms, 0), config_.peer_certificate);
    transport_.write_all(wire::encode_frame(request, config_.max_frame));

    const SecureMessage response = read_handshake_frame();
    if (response.msg_type == MsgType::Error) {
      auto [code, reason] = wire::decode_error_body(response.body);
      throw Error(static_cast<ErrorCode>(code), "server: " + reason);
    }
    if (response.msg_type != MsgType::Open) throw Error(ErrorCode::HandshakeCryptoFailure, "expected OPN response");
    Handshake hs = parse_open_body(response, false);

    std::lock_guard lock(mutex_);
    state_.channel_id = response.channel_id;
    install_token(make_token(hs.payload.token_id, hs.payload.requested_lifetime_ms, nonce.view(), hs.payload.nonce),
                  true);
    if (config_.rate_limit_per_s) state_.rate_window.emplace(*config_.rate_limit_per_s, config_.max_artificial_delay_ms);
    peer_ = std::move(hs.peer);
    state_.phase = ChannelPhase::Open;
  } catch (const Error& e) {
    fault(e.code(), e.what());
    throw;
  }
  events_.emit("channel_open", {{"channel", state_.channel_id},
                                {"role", "client"},
                                {"token", state_.active_token->token_id},
                                {"profile", std::string(profile_name(config_.profile))},
                                {"mode", std::string(wire::to_string(config_.security_mode))}});
}

void SecureChannel::accept(ServerContext& context) {
  server_ = true;
  context_ = &context;
  {
    std::lock_guard lock(mutex_);
    state_ = ChannelState{};
    state_.phase = ChannelPhase::Opening;
  }
  std::uint32_t request_id = 0;
  try {
    config_.validate();
    const SecureMessage request = read_handshake_frame();
    request_id = request.request_id;
    if (request.msg_type != MsgType::Open || (request.flags & wire::flags::kRenew) != 0)
      throw Error(ErrorCode::HandshakeCryptoFailure, "expected OPN request");
    Handshake hs = parse_open_body(request, true);
    if (!context.remember_nonce(hs.payload.nonce))
      throw Error(ErrorCode::ReplayDetected, "client nonce reused");

    const std::uint32_t lifetime =
        hs.payload.requested_lifetime_ms == 0 ? config_.token_lifetime_ms
                                              : std::min(hs.payload.requested_lifetime_ms, config_.token_lifetime_ms);
    const ChannelNonce nonce = generate_nonce(config_.suite(), config_.random());
    constexpr std::uint32_t kFirstToken = 1;

    SecureMessage response;
    response.msg_type = MsgType::Open;
    response.request_id = request.request_id;
    response.body = build_open_body(handshake_payload(nonce, lifetime, kFirstToken), hs.peer);

    std::lock_guard lock(mutex_);
    state_.channel_id = context.allocate_channel_id();
    response.channel_id = state_.channel_id;
    transport_.write_all(wire::encode_frame(response, config_.max_frame));
    install_token(make_token(kFirstToken, lifetime, nonce.view(), hs.payload.nonce), true);
    if (config_.rate_limit_per_s) state_.rate_window.emplace(*config_.rate_limit_per_s, config_.max_artificial_delay_ms);
    peer_ = std::move(hs.peer);
    state_.phase = ChannelPhase::Open;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TransportError && e.code() != ErrorCode::Timeout)
      send_error(e.code(), e.what(), request_id);
    fault(e.code(), e.what());
    throw;
  }
  events_.emit("channel_accept", {{"channel", state_.channel_id},
                                  {"role", "server"},
                                  {"token", state_.active_token->token_id},
                                  {"profile", std::string(profile_name(config_.profile))},
                                  {"mode", std::string(wire::to_string(config_.security_mode))}});
}

bool SecureChannel::sequence_exhausted() const {
  std::lock_guard lock(mutex_);
  return state_.next_send_sequence > config_.sequence_wrap_limit;
}

bool SecureChannel::renewal_due() const {
  std::lock_guard lock(mutex_);
  if (state_.phase != ChannelPhase::Open || !state_.active_token) return false;
  if (state_.next_send_sequence > config_.sequence_wrap_limit) return true;
  const auto& t = *state_.active_token;
  return clock_.now() + Millis(t.lifetime_ms / 4) > t.expires_at();
}

void SecureChannel::send(std::uint32_t request_id, ByteView payload) {
  std::lock_guard lock(mutex_);
  if (state_.phase != ChannelPhase::Open) throw Error(ErrorCode::ChannelNotOpen, std::string(to_string(state_.phase)));
  const SecurityToken& token = *state_.active_token;
  if (token.expired(clock_.now())) throw Error(ErrorCode::TokenExpired, "token " + std::to_string(token.token_id));
  if (state_.next_send_sequence > config_.sequence_wrap_limit) throw Error(ErrorCode::SequenceWrap);

  SecureMessage msg;
  msg.msg_type = MsgType::Message;
  msg.channel_id = state_.channel_id;
  msg.token_id = token.token_id;
  msg.sequence_number = static_cast<std::uint32_t>(state_.next_send_sequence);
  msg.request_id = request_id;

  switch (config_.security_mode) {
    case SecurityMode::None:
      msg.body.assign(payload.begin(), payload.end());
      break;
    case SecurityMode::Sign: {
      msg.body.resize(payload.size() + kSignatureBytes);
      const Bytes header = wire::encode_header(msg);
      msg.body = symmetric_sign(token.send_keys, header, msg.sequence_number, payload);
      break;
    }
    case SecurityMode::SignAndEncrypt: {
      msg.body.resize(symmetric_protected_size(payload.size()));
      const Bytes header = wire::encode_header(msg);
      msg.body = symmetric_protect(token.send_keys, config_.suite(), header, msg.sequence_number, payload,
                                   config_.random());
      break;
    }
  }
  transport_.write_all(wire::encode_frame(msg, config_.max_frame));
  ++state_.next_send_sequence;
}

Bytes SecureChannel::receive(const SecureMessage& frame) {
  Millis delay{0};
  {
    std::lock_guard lock(mutex_);
    if (state_.phase != ChannelPhase::Open) throw Error(ErrorCode::ChannelNotOpen, std::string(to_string(state_.phase)));
    if (state_.rate_window) delay = state_.rate_window->admit(clock_.now());
  }
  if (delay.count() > 0) {
    events_.emit("throttled", {{"channel", state_.channel_id}, {"delay_ms", delay.count()}});
    clock_.sleep_for(delay);
  }

  std::lock_guard lock(mutex_);
  if (state_.phase != ChannelPhase::Open) throw Error(ErrorCode::ChannelNotOpen, std::string(to_string(state_.phase)));
  auto reject = [&](ErrorCode code, const char* event, const std::string& detail) {
    events_.emit(event, {{"channel", state_.channel_id},
                         {"seq", frame.sequence_number},
                         {"token", frame.token_id},
                         {"error", std::string(to_string(code))}});
    return Error(code, detail);
  };

  if (frame.msg_type != MsgType::Message || frame.channel_id != state_.channel_id)
    throw reject(ErrorCode::UnknownToken, "unknown_token", "frame is not a MSG for this channel");

  const TimePoint now = clock_.now();
  const SecurityToken* token = nullptr;
  if (frame.token_id == state_.active_token->token_id) {
    token = &*state_.active_token;
    if (token->expired(now)) throw reject(ErrorCode::TokenExpired, "token_expired", "active token expired");
  } else if (state_.previous_token && frame.token_id == state_.previous_token->token_id &&
             now <= state_.previous_valid_until) {
    token = &*state_.previous_token;
  } else {
    throw reject(ErrorCode::UnknownToken, "unknown_token", "token " + std::to_string(frame.token_id));
  }

  Bytes payload;
  try {
    const Bytes header = wire::encode_header(frame);
    switch (config_.security_mode) {
      case SecurityMode::None: payload = frame.body; break;
      case SecurityMode::Sign:
        payload = symmetric_verify(token->receive_keys, header, frame.sequence_number, frame.body);
        break;
      case SecurityMode::SignAndEncrypt:
        payload = symmetric_unprotect(token->receive_keys, config_.suite(), header, frame.sequence_number, frame.body);
        break;
    }
  } catch (const Error& e) {
    throw reject(e.code(), "tamper_detected", e.what());
  }

  if (config_.evaluate_sequence_numbers) {
    if (frame.sequence_number < state_.expected_receive_sequence)
      throw reject(ErrorCode::ReplayDetected, "replay_detected",
                   "seq " + std::to_string(frame.sequence_number) + " < expected " +
                       std::to_string(state_.expected_receive_sequence));
    if (frame.sequence_number > state_.expected_receive_sequence)
      throw reject(ErrorCode::OutOfOrder, "out_of_order",
                   "seq " + std::to_string(frame.sequence_number) + " > expected " +
                       std::to_string(state_.expected_receive_sequence));
  }
  state_.expected_receive_sequence = std::uint64_t{frame.sequence_number} + 1;
  return payload;
}

std::optional<Delivery> SecureChannel::receive() {
  for (;;) {
    SecureMessage frame;
    try {
      frame = wire::decode_frame(read_frame_bytes(transport_, config_.max_frame), config_.max_frame).msg;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TransportError) {
        std::lock_guard lock(mutex_);
        if (state_.phase == ChannelPhase::Closed) return std::nullopt;
        state_.phase = ChannelPhase::Faulted;
        throw;
      }
      if (e.code() == ErrorCode::Timeout) throw;
      // A malformed frame desynchronises the stream.
      events_.emit("malformed_frame", {{"channel", state_.channel_id}, {"error", std::string(to_string(e.code()))}});
      std::lock_guard lock(mutex_);
      state_.phase = ChannelPhase::Faulted;
      throw;
    }
    switch (frame.msg_type) {
      case MsgType::Message:
        try {
          return Delivery{frame.request_id, receive(frame)};
        } catch (const Error& e) {
          if (is_frame_rejection(e.code())) continue;  // already logged
          throw;
        }
      case MsgType::Open:
        if (server_ && (frame.flags & wire::flags::kRenew) != 0) {
          handle_renew_request(frame);
          continue;
        }
        throw Error(ErrorCode::HandshakeCryptoFailure, "unexpected OPN");
      case MsgType::Close: {
        std::lock_guard lock(mutex_);
        state_.phase = ChannelPhase::Closed;
        events_.emit("channel_closed", {{"channel", state_.channel_id}, {"by", "peer"}});
        return std::nullopt;
      }
      case MsgType::Error: {
        auto [code, reason] = wire::decode_error_body(frame.body);
        {
          std::lock_guard lock(mutex_);
          state_.phase = ChannelPhase::Faulted;
        }
        throw Error(static_cast<ErrorCode>(code), "peer: " + reason);
      }
    }
  }
}

void SecureChannel::handle_renew_request(const SecureMessage& frame) {
  try {
    if (frame.channel_id != state_.channel_id) throw Error(ErrorCode::UnknownToken, "renewal for another channel");
    Handshake hs = parse_open_body(frame, true);
    if (hs.peer != peer_) throw Error(ErrorCode::CertificateUntrusted, "renewal from a different certificate");
    if (!context_->remember_nonce(hs.payload.nonce)) throw Error(ErrorCode::ReplayDetected, "client nonce reused");

    const bool reset = (frame.flags & wire::flags::kResetSeq) != 0;
    const ChannelNonce nonce = generate_nonce(config_.suite(), config_.random());
    std::lock_guard lock(mutex_);
    const std::uint32_t lifetime =
        hs.payload.requested_lifetime_ms == 0 ? config_.token_lifetime_ms
                                              : std::min(hs.payload.requested_lifetime_ms, config_.token_lifetime_ms);
    const std::uint32_t token_id = state_.active_token->token_id + 1;

    SecureMessage response;
    response.msg_type = MsgType::Open;
    response.flags = static_cast<std::uint8_t>(frame.flags);
    response.channel_id = state_.channel_id;
    response.request_id = frame.request_id;
    response.body = build_open_body(handshake_payload(nonce, lifetime, token_id), hs.peer);
    transport_.write_all(wire::encode_frame(response, config_.max_frame));
    install_token(make_token(token_id, lifetime, nonce.view(), hs.payload.nonce), reset);
    events_.emit("token_renewed",
                 {{"channel", state_.channel_id}, {"role", "server"}, {"token", token_id}, {"reset", reset}});
  } catch (const Error& e) {
    events_.emit("renew_rejected", {{"channel", state_.channel_id}, {"error", std::string(to_string(e.code()))}});
    if (e.code() == ErrorCode::TransportError) throw;
    // The channel stays on its current token; the client sees no response and times out.
  }
}

void SecureChannel::renew(bool reset_sequence) {
  {
    std::lock_guard lock(mutex_);
    if (state_.phase != ChannelPhase::Open) throw Error(ErrorCode::ChannelNotOpen, std::string(to_string(state_.phase)));
    state_.phase = ChannelPhase::Renewing;
  }
  try {
    const ChannelNonce nonce = generate_nonce(config_.suite(), config_.random());
    SecureMessage request;
    request.msg_type = MsgType::Open;
    request.flags = wire::flags::kFinal | wire::flags::kRenew | (reset_sequence ? wire::flags::kResetSeq : 0);
    request.channel_id = state_.channel_id;
    request.request_id = 0;
    request.body = build_open_body(handshake_payload(nonce, config_.token_lifetime_ms, 0), config_.peer_certificate);
    {
      std::lock_guard lock(mutex_);
      transport_.write_all(wire::encode_frame(request, config_.max_frame));
    }
    const SecureMessage response = read_handshake_frame();
    if (response.msg_type == MsgType::Error) {
      auto [code, reason] = wire::decode_error_body(response.body);
      throw Error(static_cast<ErrorCode>(code), "server: " + reason);
    }
    if (response.msg_type != MsgType::Open || (response.flags & wire::flags::kRenew) == 0)
      throw Error(ErrorCode::HandshakeCryptoFailure, "expected OPN renewal response");
    Handshake hs = parse_open_body(response, false);
    if (hs.peer != peer_) throw Error(ErrorCode::CertificateUntrusted, "renewal answered by a different certificate");

    std::lock_guard lock(mutex_);
    if (hs.payload.token_id != state_.active_token->token_id + 1)
      throw Error(ErrorCode::HandshakeCryptoFailure, "unexpected token id " + std::to_string(hs.payload.token_id));
    install_token(make_token(hs.payload.token_id, hs.payload.requested_lifetime_ms, nonce.view(), hs.payload.nonce),
                  reset_sequence);
    state_.phase = ChannelPhase::Open;
  } catch (const Error& e) {
    fault(e.code(), e.what());
    throw;
  }
  events_.emit("token_renewed", {{"channel", state_.channel_id},
                                 {"role", "client"},
                                 {"token", state_.active_token->token_id},
                                 {"reset", reset_sequence}});
}

void SecureChannel::close() {
  std::lock_guard lock(mutex_);
  if (state_.phase == ChannelPhase::Open) {
    SecureMessage clo;
    clo.msg_type = MsgType::Close;
    clo.channel_id = state_.channel_id;
    clo.token_id = state_.active_token ? state_.active_token->token_id : 0;
    try {
      transport_.write_all(wire::encode_frame(clo, config_.max_frame));
    } catch (const Error&) {
    }
  }
  if (state_.phase != ChannelPhase::Faulted) state_.phase = ChannelPhase::Closed;
  events_.emit("channel_closed", {{"channel", state_.channel_id}, {"by", "local"}});
}

}  // namespace secm2m
