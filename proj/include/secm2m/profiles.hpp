// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace secm2m {

enum class ProfileId {
  Aes128Sha256RsaOaep,
  Basic256Sha256,
  Aes256Sha256RsaPss,
  TlsRsaAes256CbcSha256,
  TlsDheRsaAesCbcSha256,
};

enum class SuiteKind { NativeChannel, TransportDelegated };

/// OAEP digest used for handshake encryption.
enum class OaepDigest { Sha1, Sha256 };

/// Handshake signature scheme.
enum class AsymSignatureScheme { Pkcs1v15Sha256, PssSha256 };

/// One column of the profile matrix. Algorithm names are stored verbatim so
/// the registry dump can be compared cell-for-cell.
struct AlgorithmSuite {
  ProfileId id;
  std::string_view name;
  std::string_view symmetric_encryption;
  std::string_view symmetric_signature;
  std::optional<std::string_view> asymmetric_encryption;
  std::string_view asymmetric_signature;
  std::string_view certificate_signing;
  std::string_view key_derivation;
  /// AES key widths in bytes. Two entries only for the DHE wildcard column.
  std::vector<std::size_t> sym_key_widths;
  std::size_t signature_len_bits = 256;
  std::size_t nonce_len_bytes = 32;
  std::size_t asym_key_min_bits = 2048;
  std::size_t asym_key_max_bits = 4096;
  SuiteKind kind = SuiteKind::NativeChannel;

  std::size_t sym_key_bytes() const { return sym_key_widths.front(); }
  std::size_t signature_len_bytes() const { return signature_len_bits / 8; }
  bool native() const { return kind == SuiteKind::NativeChannel; }

  // Semantics for native-channel suites. Throws UnsupportedAlgorithm for the
  // transport-delegated columns.
  OaepDigest oaep_digest() const;
  AsymSignatureScheme signature_scheme() const;
};

/// Algorithms that are defined but not used by any profile. Every operation
/// that accepts an algorithm name rejects these.
std::span<const std::string_view> unsupported_algorithms();

/// Throws UnsupportedAlgorithm when `algorithm` is in the unsupported section.
void require_supported_algorithm(std::string_view algorithm);

/// Case-sensitive lookup. Throws UnknownProfile, or UnsupportedAlgorithm when
/// `name` is one of the unprofiled algorithms.
const AlgorithmSuite& lookup_profile(std::string_view name);
const AlgorithmSuite& lookup_profile(ProfileId id);

std::string_view profile_name(ProfileId id);

/// The five identifiers in matrix column order.
std::array<ProfileId, 5> list_profiles();

/// Accepts iff asym_key_min_bits <= bits <= asym_key_max_bits; throws
/// KeyLengthOutOfRange otherwise.
void validate_asym_key_length(const AlgorithmSuite& suite, std::size_t bits);

/// Pipe-separated matrix: a "Name" row followed by the six algorithm rows,
/// one column per profile. Absent slots print as "-".
std::string dump_profile_table();

}  // namespace secm2m
