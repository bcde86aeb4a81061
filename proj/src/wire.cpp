// SPDX-License-Identifier: Apache-2.0
#include "secm2m/wire.hpp"

#include <algorithm>
#include <cctype>

#include "secm2m/error.hpp"

namespace secm2m::wire {
namespace {

bool known_type(std::uint8_t t) { return t >= 1 && t <= 4; }

void check_invariants(const SecureMessage& msg) {
  if (!known_type(static_cast<std::uint8_t>(msg.msg_type))) throw Error(ErrorCode::UnknownMsgType);
  if (msg.sequence_number == 0) throw Error(ErrorCode::MalformedPayload, "sequence_number must be >= 1");
  if (msg.msg_type == MsgType::Open && msg.token_id != 0)
    throw Error(ErrorCode::MalformedPayload, "OPN frames carry token_id 0");
  if ((msg.flags & flags::kFinal) == 0) throw Error(ErrorCode::MalformedPayload, "chunked frames unsupported");
}

/// Bounds-checked sequential reader for length-prefixed fields.
class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    auto v = get_u32be(in_, at_);
    at_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return in_[at_++];
  }
  Bytes field() {
    const std::uint32_t len = u32();
    need(len);
    Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(at_), in_.begin() + static_cast<std::ptrdiff_t>(at_ + len));
    at_ += len;
    return out;
  }
  std::size_t position() const { return at_; }
  bool done() const { return at_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - at_) throw Error(ErrorCode::MalformedPayload, "field overruns buffer");
  }
  ByteView in_;
  std::size_t at_ = 0;
};

void put_field(Bytes& out, ByteView field) {
  put_u32be(out, static_cast<std::uint32_t>(field.size()));
  append(out, field);
}

}  // namespace

Bytes encode_header(const SecureMessage& msg) {
  Bytes out;
  out.reserve(kHeaderBytes);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(msg.msg_type));
  out.push_back(msg.flags);
  put_u32be(out, static_cast<std::uint32_t>(kHeaderBytes + msg.body.size()));
  put_u32be(out, msg.channel_id);
  put_u32be(out, msg.token_id);
  put_u32be(out, msg.sequence_number);
  put_u32be(out, msg.request_id);
  return out;
}

Bytes encode_frame(const SecureMessage& msg, std::size_t max_frame) {
  check_invariants(msg);
  if (msg.body.size() > max_frame - kHeaderBytes)
    throw Error(ErrorCode::BodyTooLarge, std::to_string(msg.body.size()) + " byte body");
  Bytes out = encode_header(msg);
  append(out, msg.body);
  return out;
}

std::size_t frame_length(ByteView prefix, std::size_t max_frame) {
  const std::size_t magic_bytes = std::min<std::size_t>(prefix.size(), 4);
  if (!std::equal(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(magic_bytes), std::begin(kMagic)))
    throw Error(ErrorCode::BadMagic);
  if (prefix.size() < kPrefixBytes) throw Error(ErrorCode::TruncatedFrame, "incomplete header");
  if (!known_type(prefix[4])) throw Error(ErrorCode::UnknownMsgType, std::to_string(prefix[4]));
  const std::size_t total = get_u32be(prefix, 6);
  if (total < kHeaderBytes || total > max_frame)
    throw Error(ErrorCode::LengthMismatch, "total_length " + std::to_string(total));
  return total;
}

Decoded decode_frame(ByteView bytes, std::size_t max_frame) {
  const std::size_t total = frame_length(bytes, max_frame);
  if (bytes.size() < total)
    throw Error(ErrorCode::TruncatedFrame, std::to_string(bytes.size()) + " of " + std::to_string(total) + " bytes");
  Decoded d;
  d.msg.msg_type = static_cast<MsgType>(bytes[4]);
  d.msg.flags = bytes[5];
  d.msg.channel_id = get_u32be(bytes, 10);
  d.msg.token_id = get_u32be(bytes, 14);
  d.msg.sequence_number = get_u32be(bytes, 18);
  d.msg.request_id = get_u32be(bytes, 22);
  d.msg.body.assign(bytes.begin() + kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(total));
  check_invariants(d.msg);
  d.consumed = total;
  d.remainder = bytes.size() - total;
  return d;
}

std::string_view to_string(SecurityMode mode) {
  switch (mode) {
    case SecurityMode::None: return "None";
    case SecurityMode::Sign: return "Sign";
    case SecurityMode::SignAndEncrypt: return "SignAndEncrypt";
  }
  return "?";
}

SecurityMode parse_security_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "none") return SecurityMode::None;
  if (lower == "sign") return SecurityMode::Sign;
  if (lower == "signandencrypt") return SecurityMode::SignAndEncrypt;
  throw Error(ErrorCode::InvalidConfig, "unknown security mode '" + std::string(text) + "'");
}

Bytes encode_handshake(const HandshakePayload& p) {
  Bytes out;
  put_field(out, to_bytes(p.profile_name));
  put_field(out, p.sender_certificate);
  put_field(out, p.nonce);
  put_u32be(out, p.requested_lifetime_ms);
  out.push_back(static_cast<std::uint8_t>(p.security_mode));
  put_u32be(out, p.token_id);
  return out;
}

HandshakePayload decode_handshake(ByteView bytes) {
  Reader r(bytes);
  HandshakePayload p;
  p.profile_name = secm2m::to_string(r.field());
  p.sender_certificate = r.field();
  p.nonce = r.field();
  p.requested_lifetime_ms = r.u32();
  const std::uint8_t mode = r.u8();
  p.token_id = r.u32();
  if (!r.done()) throw Error(ErrorCode::MalformedPayload, "trailing bytes");
  if (p.nonce.size() != kNonceBytes)
    throw Error(ErrorCode::MalformedPayload, "nonce length " + std::to_string(p.nonce.size()));
  if (mode > 2) throw Error(ErrorCode::MalformedPayload, "security mode " + std::to_string(mode));
  p.security_mode = static_cast<SecurityMode>(mode);
  if (p.sender_certificate.empty() && p.security_mode != SecurityMode::None)
    throw Error(ErrorCode::MalformedPayload, "certificate required outside mode None");
  return p;
}

Bytes encode_security_header(const OpenSecurityHeader& h) {
  Bytes out;
  put_field(out, to_bytes(h.profile_name));
  put_field(out, h.sender_certificate);
  put_field(out, h.receiver_thumbprint);
  return out;
}

std::pair<OpenSecurityHeader, std::size_t> decode_security_header(ByteView bytes) {
  Reader r(bytes);
  OpenSecurityHeader h;
  h.profile_name = secm2m::to_string(r.field());
  h.sender_certificate = r.field();
  h.receiver_thumbprint = r.field();
  return {std::move(h), r.position()};
}

Bytes encode_error_body(std::uint32_t code, std::string_view reason) {
  Bytes out;
  put_u32be(out, code);
  put_field(out, to_bytes(reason));
  return out;
}

std::pair<std::uint32_t, std::string> decode_error_body(ByteView bytes) {
  Reader r(bytes);
  const std::uint32_t code = r.u32();
  return {code, secm2m::to_string(r.field())};
}

}  // namespace secm2m::wire
