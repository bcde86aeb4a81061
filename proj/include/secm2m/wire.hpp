// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "secm2m/bytes.hpp"
#include "secm2m/crypto.hpp"

namespace secm2m::wire {

// Frame layout (all integers big-endian):
//   0  magic "SEC1"      4
//   4  msg_type          1
//   5  flags             1
//   6  total_length      4
//  10  channel_id        4
//  14  token_id          4
//  18  sequence_number   4
//  22  request_id        4
//  26  body              total_length - 26
inline constexpr std::uint8_t kMagic[4] = {'S', 'E', 'C', '1'};
inline constexpr std::size_t kPrefixBytes = 10;
inline constexpr std::size_t kHeaderBytes = 26;
inline constexpr std::size_t kDefaultMaxFrame = 1024 * 1024;

enum class MsgType : std::uint8_t { Open = 1, Message = 2, Close = 3, Error = 4 };

namespace flags {
inline constexpr std::uint8_t kFinal = 0x01;
inline constexpr std::uint8_t kRenew = 0x02;     // OPN renews the token of an open channel
inline constexpr std::uint8_t kResetSeq = 0x04;  // renewal also restarts sequence numbers at 1
}  // namespace flags

struct SecureMessage {
  MsgType msg_type = MsgType::Message;
  std::uint8_t flags = flags::kFinal;
  std::uint32_t channel_id = 0;
  std::uint32_t token_id = 0;
  std::uint32_t sequence_number = 1;
  std::uint32_t request_id = 0;
  Bytes body;

  bool operator==(const SecureMessage&) const = default;
};

/// The 26-byte header `msg` encodes to, given its current body size. This is
/// the byte string the symmetric MAC covers.
Bytes encode_header(const SecureMessage& msg);

/// Errors: BodyTooLarge when the frame would exceed `max_frame`;
/// MalformedPayload when `msg` violates a type invariant.
Bytes encode_frame(const SecureMessage& msg, std::size_t max_frame = kDefaultMaxFrame);

struct Decoded {
  SecureMessage msg;
  std::size_t consumed = 0;   // == total_length
  std::size_t remainder = 0;  // bytes after the frame
};

/// Parses one frame from the front of `bytes`; never reads past total_length.
/// Errors: BadMagic, UnknownMsgType, LengthMismatch, TruncatedFrame, MalformedPayload.
Decoded decode_frame(ByteView bytes, std::size_t max_frame = kDefaultMaxFrame);

/// Validates the first 10 bytes of a frame and returns total_length, so a
/// stream reader knows how much to read before committing any allocation.
std::size_t frame_length(ByteView prefix, std::size_t max_frame = kDefaultMaxFrame);

enum class SecurityMode : std::uint8_t { None = 0, Sign = 1, SignAndEncrypt = 2 };

std::string_view to_string(SecurityMode mode);
/// Accepts "None", "Sign", "SignAndEncrypt" (case-insensitive). Throws InvalidConfig.
SecurityMode parse_security_mode(std::string_view text);

struct HandshakePayload {
  std::string profile_name;
  Bytes sender_certificate;
  Bytes nonce;  // always 32 bytes on the wire
  std::uint32_t requested_lifetime_ms = 0;
  SecurityMode security_mode = SecurityMode::SignAndEncrypt;
  std::uint32_t token_id = 0;  // assigned by the server in responses; 0 in requests

  bool operator==(const HandshakePayload&) const = default;
};

Bytes encode_handshake(const HandshakePayload& p);
/// Errors: MalformedPayload on any overrun, trailing byte, nonce length other
/// than 32, unknown mode, or an empty certificate outside mode None.
HandshakePayload decode_handshake(ByteView bytes);

/// Plaintext prefix of every OPN body: tells the receiver which profile and
/// which key pair the protected part that follows was produced for.
struct OpenSecurityHeader {
  std::string profile_name;
  Bytes sender_certificate;
  Bytes receiver_thumbprint;  // SHA-256 of the receiver's certificate, or empty

  bool operator==(const OpenSecurityHeader&) const = default;
};

Bytes encode_security_header(const OpenSecurityHeader& h);
/// Returns the header and the number of bytes it occupied. Errors: MalformedPayload.
std::pair<OpenSecurityHeader, std::size_t> decode_security_header(ByteView bytes);

/// ERR body: be32(error code) || be32(len) || reason.
Bytes encode_error_body(std::uint32_t code, std::string_view reason);
std::pair<std::uint32_t, std::string> decode_error_body(ByteView bytes);

}  // namespace secm2m::wire
