// SPDX-License-Identifier: Apache-2.0
#include "secm2m/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

#include <algorithm>
#include <climits>

#include "secm2m/error.hpp"

namespace secm2m {
namespace {

[[noreturn]] void provider_failure(const char* what) {
  unsigned long err = ERR_get_error();
  char buf[256] = {0};
  if (err != 0) ERR_error_string_n(err, buf, sizeof buf);
  ERR_clear_error();
  throw Error(ErrorCode::CryptoProviderError, std::string(what) + (err ? std::string(" (") + buf + ")" : ""));
}

struct BioFree {
  void operator()(BIO* b) const { BIO_free(b); }
};
struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct MdCtxFree {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
struct X509Free {
  void operator()(X509* x) const { X509_free(x); }
};

using BioPtr = std::unique_ptr<BIO, BioFree>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;
using X509Ptr = std::unique_ptr<X509, X509Free>;

std::shared_ptr<EVP_PKEY> adopt(EVP_PKEY* key) { return {key, EVP_PKEY_free}; }

std::string read_bio(BIO* bio) {
  char* data = nullptr;
  long len = BIO_get_mem_data(bio, &data);
  return std::string(data, static_cast<std::size_t>(len));
}

const EVP_CIPHER* cbc_cipher(std::size_t key_bytes) {
  switch (key_bytes) {
    case 16: return EVP_aes_128_cbc();
    case 32: return EVP_aes_256_cbc();
    default: throw Error(ErrorCode::UnsupportedAlgorithm, "AES key width " + std::to_string(key_bytes));
  }
}

void require_native(const AlgorithmSuite& suite) {
  if (!suite.native())
    throw Error(ErrorCode::UnsupportedAlgorithm, std::string(suite.name) + " is transport-delegated");
}

Bytes aes_cbc(bool encrypt, ByteView key, ByteView iv, ByteView in) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) provider_failure("EVP_CIPHER_CTX_new");
  if (EVP_CipherInit_ex(ctx.get(), cbc_cipher(key.size()), nullptr, key.data(), iv.data(), encrypt ? 1 : 0) != 1)
    provider_failure("EVP_CipherInit_ex");
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  Bytes out(in.size() + kBlockBytes);
  int len = 0;
  int total = 0;
  if (EVP_CipherUpdate(ctx.get(), out.data(), &len, in.data(), static_cast<int>(in.size())) != 1)
    provider_failure("EVP_CipherUpdate");
  total = len;
  if (EVP_CipherFinal_ex(ctx.get(), out.data() + total, &len) != 1) provider_failure("EVP_CipherFinal_ex");
  total += len;
  out.resize(static_cast<std::size_t>(total));
  return out;
}

Bytes mac_input(ByteView header_bytes, std::uint32_t sequence_number, ByteView plaintext) {
  Bytes input;
  input.reserve(header_bytes.size() + 4 + plaintext.size());
  append(input, header_bytes);
  put_u32be(input, sequence_number);
  append(input, plaintext);
  return input;
}

void check_keys(const DirectionalKeys& keys, const AlgorithmSuite& suite) {
  if (keys.signing_key.size() != kSignatureBytes || keys.encryption_key.size() != suite.sym_key_bytes() ||
      keys.initialization_vector.size() != kBlockBytes)
    throw Error(ErrorCode::InvalidConfig, "directional keys do not match suite");
}

void check_modulus(const AlgorithmSuite& suite, std::size_t bits) {
  validate_asym_key_length(suite, bits);
}

const EVP_MD* oaep_md(const AlgorithmSuite& suite) {
  return suite.oaep_digest() == OaepDigest::Sha1 ? EVP_sha1() : EVP_sha256();
}

void configure_signature(EVP_PKEY_CTX* pctx, const AlgorithmSuite& suite) {
  if (suite.signature_scheme() == AsymSignatureScheme::PssSha256) {
    if (EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING) != 1 ||
        EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST) != 1 ||
        EVP_PKEY_CTX_set_rsa_mgf1_md(pctx, EVP_sha256()) != 1)
      provider_failure("configure PSS");
  } else if (EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PADDING) != 1) {
    provider_failure("configure PKCS#1 v1.5");
  }
}

void configure_oaep(EVP_PKEY_CTX* pctx, const AlgorithmSuite& suite) {
  if (EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(pctx, oaep_md(suite)) != 1 ||
      EVP_PKEY_CTX_set_rsa_mgf1_md(pctx, oaep_md(suite)) != 1)
    provider_failure("configure OAEP");
}

Bytes rsa_sign(const KeyPair& key, const AlgorithmSuite& suite, ByteView data) {
  MdCtxPtr ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  if (!ctx || EVP_DigestSignInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.native()) != 1)
    provider_failure("EVP_DigestSignInit");
  configure_signature(pctx, suite);
  std::size_t len = 0;
  if (EVP_DigestSign(ctx.get(), nullptr, &len, data.data(), data.size()) != 1) provider_failure("EVP_DigestSign");
  Bytes sig(len);
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, data.data(), data.size()) != 1) provider_failure("EVP_DigestSign");
  sig.resize(len);
  return sig;
}

bool rsa_verify(const PublicKey& key, const AlgorithmSuite& suite, ByteView data, ByteView sig) {
  MdCtxPtr ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.native()) != 1)
    provider_failure("EVP_DigestVerifyInit");
  configure_signature(pctx, suite);
  int rc = EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), data.data(), data.size());
  ERR_clear_error();
  return rc == 1;
}

}  // namespace

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (out.size() > static_cast<std::size_t>(INT_MAX) || RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
    throw Error(ErrorCode::RngFailure, "RAND_bytes");
}

SystemRandom& SystemRandom::instance() {
  static SystemRandom rng;
  return rng;
}

void ZeroRandom::fill(std::span<std::uint8_t> out) { std::fill(out.begin(), out.end(), 0); }

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::lock_guard lock(mutex_);
  for (auto& b : out) b = static_cast<std::uint8_t>(engine_());
}

double SeededRandom::uniform(double lo, double hi) {
  std::lock_guard lock(mutex_);
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

ChannelNonce::ChannelNonce(Bytes bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() != kNonceBytes)
    throw Error(ErrorCode::BadNonceLength, std::to_string(bytes_.size()) + " bytes");
}

ChannelNonce generate_nonce(const AlgorithmSuite& suite, RandomSource& rng) {
  return ChannelNonce(rng.bytes(suite.nonce_len_bytes));
}

Bytes sha256(ByteView data) {
  Bytes out(32);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    provider_failure("EVP_Digest");
  return out;
}

Bytes hmac_sha256(ByteView key, ByteView data) {
  static const std::uint8_t kEmpty = 0;
  Bytes out(32);
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.empty() ? &kEmpty : key.data(), static_cast<int>(key.size()),
           data.empty() ? &kEmpty : data.data(), data.size(), out.data(), &len) == nullptr)
    provider_failure("HMAC");
  return out;
}

Bytes p_sha256(ByteView secret, ByteView seed, std::size_t length) {
  Bytes out;
  out.reserve(length + 32);
  Bytes a(seed.begin(), seed.end());
  Bytes block_input;
  while (out.size() < length) {
    a = hmac_sha256(secret, a);
    block_input = a;
    append(block_input, seed);
    append(out, hmac_sha256(secret, block_input));
  }
  out.resize(length);
  return out;
}

bool constant_time_equal(ByteView a, ByteView b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

TokenKeys derive_token_keys(const AlgorithmSuite& suite, ByteView local_nonce, ByteView remote_nonce) {
  require_native(suite);
  if (local_nonce.size() != suite.nonce_len_bytes || remote_nonce.size() != suite.nonce_len_bytes)
    throw Error(ErrorCode::BadNonceLength);
  const std::size_t k = suite.sym_key_bytes();
  auto split = [k](const Bytes& material) {
    DirectionalKeys keys;
    auto it = material.begin();
    keys.signing_key.assign(it, it + kSignatureBytes);
    it += kSignatureBytes;
    keys.encryption_key.assign(it, it + static_cast<std::ptrdiff_t>(k));
    it += static_cast<std::ptrdiff_t>(k);
    keys.initialization_vector.assign(it, it + kBlockBytes);
    return keys;
  };
  const std::size_t total = kSignatureBytes + k + kBlockBytes;
  return {split(p_sha256(remote_nonce, local_nonce, total)), split(p_sha256(local_nonce, remote_nonce, total))};
}

std::size_t symmetric_protected_size(std::size_t plaintext_len) {
  const std::size_t inner = plaintext_len + kSignatureBytes;
  return kBlockBytes + (inner / kBlockBytes + 1) * kBlockBytes;
}

Bytes symmetric_protect(const DirectionalKeys& keys, const AlgorithmSuite& suite, ByteView header_bytes,
                        std::uint32_t sequence_number, ByteView plaintext, RandomSource& rng) {
  require_native(suite);
  check_keys(keys, suite);
  Bytes inner(plaintext.begin(), plaintext.end());
  append(inner, hmac_sha256(keys.signing_key, mac_input(header_bytes, sequence_number, plaintext)));
  const auto pad = static_cast<std::uint8_t>(kBlockBytes - inner.size() % kBlockBytes);
  inner.insert(inner.end(), pad, pad);

  Bytes out = rng.bytes(kBlockBytes);
  append(out, aes_cbc(true, keys.encryption_key, out, inner));
  return out;
}

Bytes symmetric_unprotect(const DirectionalKeys& keys, const AlgorithmSuite& suite, ByteView header_bytes,
                          std::uint32_t sequence_number, ByteView body) {
  require_native(suite);
  check_keys(keys, suite);
  if (body.size() < 2 * kBlockBytes) throw Error(ErrorCode::BodyTooShort);
  if ((body.size() - kBlockBytes) % kBlockBytes != 0) throw Error(ErrorCode::PaddingInvalid, "not block aligned");

  Bytes inner = aes_cbc(false, keys.encryption_key, body.first(kBlockBytes), body.subspan(kBlockBytes));
  const std::uint8_t pad = inner.back();
  if (pad == 0 || pad > kBlockBytes || inner.size() < pad + kSignatureBytes)
    throw Error(ErrorCode::PaddingInvalid);
  for (std::size_t i = inner.size() - pad; i < inner.size(); ++i)
    if (inner[i] != pad) throw Error(ErrorCode::PaddingInvalid);
  inner.resize(inner.size() - pad);

  const std::size_t text_len = inner.size() - kSignatureBytes;
  ByteView text(inner.data(), text_len);
  ByteView mac(inner.data() + text_len, kSignatureBytes);
  if (!constant_time_equal(mac, hmac_sha256(keys.signing_key, mac_input(header_bytes, sequence_number, text))))
    throw Error(ErrorCode::SignatureInvalid);
  inner.resize(text_len);
  return inner;
}

Bytes symmetric_sign(const DirectionalKeys& keys, ByteView header_bytes, std::uint32_t sequence_number,
                     ByteView plaintext) {
  Bytes out(plaintext.begin(), plaintext.end());
  append(out, hmac_sha256(keys.signing_key, mac_input(header_bytes, sequence_number, plaintext)));
  return out;
}

Bytes symmetric_verify(const DirectionalKeys& keys, ByteView header_bytes, std::uint32_t sequence_number,
                       ByteView body) {
  if (body.size() < kSignatureBytes) throw Error(ErrorCode::BodyTooShort);
  ByteView text = body.first(body.size() - kSignatureBytes);
  if (!constant_time_equal(body.last(kSignatureBytes),
                           hmac_sha256(keys.signing_key, mac_input(header_bytes, sequence_number, text))))
    throw Error(ErrorCode::SignatureInvalid);
  return Bytes(text.begin(), text.end());
}

// --- keys and certificates ---------------------------------------------------

PublicKey PublicKey::from_der(ByteView spki_der) {
  const unsigned char* p = spki_der.data();
  EVP_PKEY* key = d2i_PUBKEY(nullptr, &p, static_cast<long>(spki_der.size()));
  if (key == nullptr) provider_failure("d2i_PUBKEY");
  return PublicKey(adopt(key));
}

std::size_t PublicKey::modulus_bits() const { return static_cast<std::size_t>(EVP_PKEY_get_bits(key_.get())); }

Bytes PublicKey::to_der() const {
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0) provider_failure("i2d_PUBKEY");
  Bytes out(static_cast<std::size_t>(len));
  unsigned char* p = out.data();
  i2d_PUBKEY(key_.get(), &p);
  return out;
}

KeyPair KeyPair::generate(std::size_t bits) {
  if (bits < 2048 || bits > 4096) throw Error(ErrorCode::KeyLengthOutOfRange, std::to_string(bits) + " bits");
  EVP_PKEY* key = EVP_RSA_gen(static_cast<unsigned int>(bits));
  if (key == nullptr) provider_failure("EVP_RSA_gen");
  return KeyPair(adopt(key));
}

KeyPair KeyPair::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* key = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
  if (key == nullptr) provider_failure("PEM_read_bio_PrivateKey");
  return KeyPair(adopt(key));
}

std::string KeyPair::private_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (PEM_write_bio_PrivateKey(bio.get(), key_.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1)
    provider_failure("PEM_write_bio_PrivateKey");
  return read_bio(bio.get());
}

Certificate Certificate::self_signed(const KeyPair& keys, std::string_view common_name, std::uint32_t valid_days) {
  X509Ptr cert(X509_new());
  if (!cert) provider_failure("X509_new");
  std::uint8_t serial_bytes[8];
  SystemRandom::instance().fill(serial_bytes);
  serial_bytes[0] &= 0x7f;
  std::uint64_t serial = 0;
  for (auto b : serial_bytes) serial = serial << 8 | b;
  X509_set_version(cert.get(), 2);
  ASN1_INTEGER_set_uint64(X509_get_serialNumber(cert.get()), serial);
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), 0);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), static_cast<long>(valid_days) * 86400L);
  if (X509_set_pubkey(cert.get(), keys.native()) != 1) provider_failure("X509_set_pubkey");
  X509_NAME* name = X509_get_subject_name(cert.get());
  const std::string cn(common_name);
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC, reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1,
                             0);
  X509_set_issuer_name(cert.get(), name);
  if (X509_sign(cert.get(), keys.native(), EVP_sha256()) == 0) provider_failure("X509_sign");
  int len = i2d_X509(cert.get(), nullptr);
  Bytes der(static_cast<std::size_t>(len));
  unsigned char* p = der.data();
  i2d_X509(cert.get(), &p);
  return Certificate(std::move(der));
}

namespace {
X509Ptr parse_x509(ByteView der) {
  const unsigned char* p = der.data();
  X509Ptr cert(d2i_X509(nullptr, &p, static_cast<long>(der.size())));
  if (!cert || p != der.data() + der.size()) {
    ERR_clear_error();
    throw Error(ErrorCode::CertificateUntrusted, "unparseable certificate");
  }
  return cert;
}
}  // namespace

Certificate Certificate::from_der(ByteView der) {
  X509Ptr cert = parse_x509(der);
  EVP_PKEY* key = X509_get0_pubkey(cert.get());
  if (key == nullptr || X509_get_signature_nid(cert.get()) != NID_sha256WithRSAEncryption ||
      X509_verify(cert.get(), key) != 1) {
    ERR_clear_error();
    throw Error(ErrorCode::CertificateUntrusted, "bad self-signature");
  }
  return Certificate(Bytes(der.begin(), der.end()));
}

Certificate Certificate::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  X509Ptr cert(PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr));
  if (!cert) provider_failure("PEM_read_bio_X509");
  int len = i2d_X509(cert.get(), nullptr);
  Bytes der(static_cast<std::size_t>(len));
  unsigned char* p = der.data();
  i2d_X509(cert.get(), &p);
  return from_der(der);
}

std::string Certificate::pem() const {
  X509Ptr cert = parse_x509(der_);
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (PEM_write_bio_X509(bio.get(), cert.get()) != 1) provider_failure("PEM_write_bio_X509");
  return read_bio(bio.get());
}

PublicKey Certificate::public_key() const {
  X509Ptr cert = parse_x509(der_);
  EVP_PKEY* key = X509_get_pubkey(cert.get());
  if (key == nullptr) provider_failure("X509_get_pubkey");
  return PublicKey(adopt(key));
}

std::string Certificate::common_name() const {
  X509Ptr cert = parse_x509(der_);
  char buf[256] = {0};
  X509_NAME_get_text_by_NID(X509_get_subject_name(cert.get()), NID_commonName, buf, sizeof buf);
  return buf;
}

// --- asymmetric protection ---------------------------------------------------

std::size_t oaep_block_capacity(const AlgorithmSuite& suite, std::size_t modulus_bytes) {
  const std::size_t digest = suite.oaep_digest() == OaepDigest::Sha1 ? 20 : 32;
  return modulus_bytes - 2 * digest - 2;
}

Bytes asymmetric_protect(const PublicKey& remote_public, const KeyPair& local_private, const AlgorithmSuite& suite,
                         ByteView payload) {
  require_native(suite);
  check_modulus(suite, remote_public.modulus_bits());
  check_modulus(suite, local_private.modulus_bits());
  if (payload.size() > kHandshakeCeiling)
    throw Error(ErrorCode::PayloadTooLarge, std::to_string(payload.size()) + " bytes");

  Bytes plain(payload.begin(), payload.end());
  append(plain, rsa_sign(local_private, suite, payload));

  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(remote_public.native(), nullptr));
  if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1) provider_failure("EVP_PKEY_encrypt_init");
  configure_oaep(ctx.get(), suite);

  const std::size_t modulus = remote_public.modulus_bytes();
  const std::size_t capacity = oaep_block_capacity(suite, modulus);
  Bytes out;
  out.reserve((plain.size() / capacity + 1) * modulus);
  for (std::size_t at = 0; at < plain.size(); at += capacity) {
    const std::size_t n = std::min(capacity, plain.size() - at);
    Bytes block(modulus);
    std::size_t len = block.size();
    if (EVP_PKEY_encrypt(ctx.get(), block.data(), &len, plain.data() + at, n) != 1)
      provider_failure("EVP_PKEY_encrypt");
    block.resize(len);
    append(out, block);
  }
  return out;
}

Bytes asymmetric_unprotect(const KeyPair& local_private, const PublicKey& remote_public, const AlgorithmSuite& suite,
                           ByteView blob) {
  require_native(suite);
  check_modulus(suite, remote_public.modulus_bits());
  check_modulus(suite, local_private.modulus_bits());
  const std::size_t modulus = local_private.public_key().modulus_bytes();
  if (blob.empty() || blob.size() % modulus != 0) throw Error(ErrorCode::BlockSizeMismatch);

  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(local_private.native(), nullptr));
  if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1) provider_failure("EVP_PKEY_decrypt_init");
  configure_oaep(ctx.get(), suite);

  Bytes plain;
  for (std::size_t at = 0; at < blob.size(); at += modulus) {
    Bytes block(modulus);
    std::size_t len = block.size();
    if (EVP_PKEY_decrypt(ctx.get(), block.data(), &len, blob.data() + at, modulus) != 1) {
      ERR_clear_error();
      throw Error(ErrorCode::DecryptionFailed);
    }
    plain.insert(plain.end(), block.begin(), block.begin() + static_cast<std::ptrdiff_t>(len));
  }

  const std::size_t sig_len = remote_public.modulus_bytes();
  if (plain.size() < sig_len) throw Error(ErrorCode::SignatureInvalid, "missing signature");
  ByteView payload(plain.data(), plain.size() - sig_len);
  ByteView sig(plain.data() + payload.size(), sig_len);
  if (!rsa_verify(remote_public, suite, payload, sig)) throw Error(ErrorCode::SignatureInvalid);
  plain.resize(payload.size());
  return plain;
}

}  // namespace secm2m
