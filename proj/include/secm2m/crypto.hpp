// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>

#include "secm2m/bytes.hpp"
#include "secm2m/profiles.hpp"

typedef struct evp_pkey_st EVP_PKEY;

namespace secm2m {

inline constexpr std::size_t kNonceBytes = 32;
inline constexpr std::size_t kSignatureBytes = 32;  // HMAC-SHA-256
inline constexpr std::size_t kBlockBytes = 16;      // AES block and IV size
inline constexpr std::size_t kHandshakeCeiling = 64 * 1024;

/// Source of random bytes. Implementations must be safe for concurrent use.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  /// Throws Error(RngFailure) when the source cannot supply bytes.
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    fill(out);
    return out;
  }
};

/// OpenSSL DRBG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
  static SystemRandom& instance();
};

/// Test stub producing zeros.
class ZeroRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible, non-cryptographic stream for simulation noise and test
/// payloads. Never use it for keying material.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override;
  double uniform(double lo, double hi);

 private:
  std::mutex mutex_;
  std::mt19937_64 engine_;
};

class ChannelNonce {
 public:
  /// Throws BadNonceLength unless `bytes` is exactly 32 bytes.
  explicit ChannelNonce(Bytes bytes);

  ByteView view() const { return bytes_; }
  const Bytes& bytes() const { return bytes_; }
  bool operator==(const ChannelNonce&) const = default;

 private:
  Bytes bytes_;
};

ChannelNonce generate_nonce(const AlgorithmSuite& suite, RandomSource& rng);

Bytes sha256(ByteView data);
Bytes hmac_sha256(ByteView key, ByteView data);

/// HMAC-SHA-256 chain expansion: A(0) = seed, A(i) = HMAC(secret, A(i-1)),
/// output = HMAC(secret, A(1) || seed) || HMAC(secret, A(2) || seed) || ...
/// truncated to `length` bytes.
Bytes p_sha256(ByteView secret, ByteView seed, std::size_t length);

/// Constant-time equality; differing lengths compare unequal.
bool constant_time_equal(ByteView a, ByteView b);

struct DirectionalKeys {
  Bytes signing_key;            // 32 bytes
  Bytes encryption_key;         // suite.sym_key_bytes()
  Bytes initialization_vector;  // 16 bytes

  bool operator==(const DirectionalKeys&) const = default;
};

struct TokenKeys {
  DirectionalKeys send;
  DirectionalKeys receive;
};

/// send    = P_SHA256(secret = remote, seed = local)  split (sign, enc, iv)
/// receive = P_SHA256(secret = local,  seed = remote) split (sign, enc, iv)
/// Throws BadNonceLength unless both nonces are 32 bytes.
TokenKeys derive_token_keys(const AlgorithmSuite& suite, ByteView local_nonce, ByteView remote_nonce);

/// Size of symmetric_protect output for a plaintext of `plaintext_len` bytes.
std::size_t symmetric_protected_size(std::size_t plaintext_len);

/// Sign-then-encrypt: IV || AES-CBC(plaintext || HMAC || PKCS#7 pad). The MAC
/// covers header_bytes || be32(sequence_number) || plaintext. The IV is drawn
/// fresh from `rng` for every message.
Bytes symmetric_protect(const DirectionalKeys& keys, const AlgorithmSuite& suite, ByteView header_bytes,
                        std::uint32_t sequence_number, ByteView plaintext, RandomSource& rng);

/// Inverse of symmetric_protect. Errors: BodyTooShort, PaddingInvalid, SignatureInvalid.
Bytes symmetric_unprotect(const DirectionalKeys& keys, const AlgorithmSuite& suite, ByteView header_bytes,
                          std::uint32_t sequence_number, ByteView body);

/// Sign-only protection: plaintext || HMAC over the same input as symmetric_protect.
Bytes symmetric_sign(const DirectionalKeys& keys, ByteView header_bytes, std::uint32_t sequence_number,
                     ByteView plaintext);
/// Errors: BodyTooShort, SignatureInvalid.
Bytes symmetric_verify(const DirectionalKeys& keys, ByteView header_bytes, std::uint32_t sequence_number,
                       ByteView body);

/// RSA public key (shared, immutable).
class PublicKey {
 public:
  static PublicKey from_der(ByteView spki_der);

  std::size_t modulus_bits() const;
  std::size_t modulus_bytes() const { return (modulus_bits() + 7) / 8; }
  Bytes to_der() const;
  EVP_PKEY* native() const { return key_.get(); }

 private:
  friend class KeyPair;
  friend class Certificate;
  explicit PublicKey(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  std::shared_ptr<EVP_PKEY> key_;
};

/// RSA key pair (shared, immutable).
class KeyPair {
 public:
  /// Throws KeyLengthOutOfRange outside 2048..4096 bits.
  static KeyPair generate(std::size_t bits);
  static KeyPair from_pem(std::string_view pem);

  std::string private_pem() const;
  PublicKey public_key() const { return PublicKey(key_); }
  std::size_t modulus_bits() const { return public_key().modulus_bits(); }
  EVP_PKEY* native() const { return key_.get(); }

 private:
  explicit KeyPair(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  std::shared_ptr<EVP_PKEY> key_;
};

/// Self-signed X.509 certificate used as an application instance identity.
/// Pinning compares the full DER encoding.
class Certificate {
 public:
  /// Signs with RSA-PKCS#1 v1.5 / SHA-256.
  static Certificate self_signed(const KeyPair& keys, std::string_view common_name,
                                 std::uint32_t valid_days = 365);
  /// Parses and verifies the self-signature. Throws CertificateUntrusted on failure.
  static Certificate from_der(ByteView der);
  static Certificate from_pem(std::string_view pem);

  const Bytes& der() const { return der_; }
  std::string pem() const;
  PublicKey public_key() const;
  std::string common_name() const;
  /// SHA-256 of the DER encoding.
  Bytes thumbprint() const { return sha256(der_); }

  bool operator==(const Certificate& other) const { return der_ == other.der_; }

 private:
  explicit Certificate(Bytes der) : der_(std::move(der)) {}
  Bytes der_;
};

/// Largest OAEP plaintext block for a modulus of `modulus_bytes` under `suite`.
std::size_t oaep_block_capacity(const AlgorithmSuite& suite, std::size_t modulus_bytes);

/// Signs `payload` with `local_private` per the suite's asymmetric signature,
/// then OAEP-encrypts payload || signature to `remote_public` in as many
/// blocks as needed. OAEP randomness is drawn from the provider's DRBG.
Bytes asymmetric_protect(const PublicKey& remote_public, const KeyPair& local_private,
                         const AlgorithmSuite& suite, ByteView payload);

/// Errors: BlockSizeMismatch, DecryptionFailed, SignatureInvalid, KeyLengthOutOfRange.
Bytes asymmetric_unprotect(const KeyPair& local_private, const PublicKey& remote_public,
                           const AlgorithmSuite& suite, ByteView blob);

}  // namespace secm2m
