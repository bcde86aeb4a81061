// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace secm2m {

enum class ErrorCode : unsigned {
  // profiles
  UnknownProfile = 1,
  UnsupportedAlgorithm,
  KeyLengthOutOfRange,
  // crypto
  RngFailure,
  BadNonceLength,
  SignatureInvalid,
  PaddingInvalid,
  BodyTooShort,
  DecryptionFailed,
  BlockSizeMismatch,
  PayloadTooLarge,
  CryptoProviderError,
  // wire
  BodyTooLarge,
  BadMagic,
  TruncatedFrame,
  UnknownMsgType,
  LengthMismatch,
  MalformedPayload,
  // channel
  CertificateUntrusted,
  ProfileMismatch,
  HandshakeCryptoFailure,
  TransportError,
  ChannelNotOpen,
  TokenExpired,
  ReplayDetected,
  OutOfOrder,
  UnknownToken,
  SequenceWrap,
  InvalidConfig,
  Timeout,
  // energy
  UnknownNode,
  ValidationError,
  ReadOnlyNode,
  // gateway
  FrameError,
  PduTooLarge,
  GatewayUnavailable,
  // harness
  ScenarioSetupFailure,
  IncompleteEvidence,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries a stable code; the message is
/// free-form detail for logs.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
        code_(code) {}
  explicit Error(ErrorCode code) : Error(code, "") {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace secm2m
