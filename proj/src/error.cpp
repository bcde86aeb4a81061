// SPDX-License-Identifier: Apache-2.0
#include "secm2m/error.hpp"

#include <algorithm>
#include <stdexcept>

#include "secm2m/bytes.hpp"

namespace secm2m {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownProfile: return "UnknownProfile";
    case ErrorCode::UnsupportedAlgorithm: return "UnsupportedAlgorithm";
    case ErrorCode::KeyLengthOutOfRange: return "KeyLengthOutOfRange";
    case ErrorCode::RngFailure: return "RngFailure";
    case ErrorCode::BadNonceLength: return "BadNonceLength";
    case ErrorCode::SignatureInvalid: return "SignatureInvalid";
    case ErrorCode::PaddingInvalid: return "PaddingInvalid";
    case ErrorCode::BodyTooShort: return "BodyTooShort";
    case ErrorCode::DecryptionFailed: return "DecryptionFailed";
    case ErrorCode::BlockSizeMismatch: return "BlockSizeMismatch";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::CryptoProviderError: return "CryptoProviderError";
    case ErrorCode::BodyTooLarge: return "BodyTooLarge";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::UnknownMsgType: return "UnknownMsgType";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::CertificateUntrusted: return "CertificateUntrusted";
    case ErrorCode::ProfileMismatch: return "ProfileMismatch";
    case ErrorCode::HandshakeCryptoFailure: return "HandshakeCryptoFailure";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ChannelNotOpen: return "ChannelNotOpen";
    case ErrorCode::TokenExpired: return "TokenExpired";
    case ErrorCode::ReplayDetected: return "ReplayDetected";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::SequenceWrap: return "SequenceWrap";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::ReadOnlyNode: return "ReadOnlyNode";
    case ErrorCode::FrameError: return "FrameError";
    case ErrorCode::PduTooLarge: return "PduTooLarge";
    case ErrorCode::GatewayUnavailable: return "GatewayUnavailable";
    case ErrorCode::ScenarioSetupFailure: return "ScenarioSetupFailure";
    case ErrorCode::IncompleteEvidence: return "IncompleteEvidence";
  }
  return "Unknown";
}

std::string to_hex(ByteView b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto byte : b) {
    out.push_back(kDigits[byte >> 4]);
    out.push_back(kDigits[byte & 0x0f]);
  }
  return out;
}

namespace {
int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw std::invalid_argument("non-hex character");
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(hex_value(hex[2 * i]) << 4 | hex_value(hex[2 * i + 1]));
  return out;
}

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace secm2m
