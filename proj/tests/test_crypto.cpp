// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>

#include "secm2m/crypto.hpp"
#include "secm2m/error.hpp"
#include "test_support.hpp"

using namespace secm2m;
using secm2m::fixtures::identity;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Timeout;  // sentinel: no error
}

class FailingRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t>) override { throw Error(ErrorCode::RngFailure, "drained"); }
};

const AlgorithmSuite& aes256() { return lookup_profile(ProfileId::Aes256Sha256RsaPss); }

DirectionalKeys fixed_keys(const AlgorithmSuite& suite) {
  Bytes local(32), remote(32);
  for (int i = 0; i < 32; ++i) {
    local[i] = static_cast<std::uint8_t>(i);
    remote[i] = static_cast<std::uint8_t>(200 - i);
  }
  return derive_token_keys(suite, local, remote).send;
}

}  // namespace

TEST(Nonce, LengthAndSources) {
  const auto n = generate_nonce(aes256(), SystemRandom::instance());
  EXPECT_EQ(n.bytes().size(), 32u);

  ZeroRandom zero;
  EXPECT_EQ(generate_nonce(aes256(), zero).bytes(), Bytes(32, 0));

  FailingRandom failing;
  EXPECT_EQ(code_of([&] { generate_nonce(aes256(), failing); }), ErrorCode::RngFailure);
  EXPECT_EQ(code_of([] { ChannelNonce(Bytes(31)); }), ErrorCode::BadNonceLength);
}

TEST(Nonce, NoCollisionsOverTenThousandDraws) {
  std::set<Bytes> seen;
  for (int i = 0; i < 10000; ++i) seen.insert(generate_nonce(aes256(), SystemRandom::instance()).bytes());
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(PSha256, ZeroLengthAndDeterminism) {
  EXPECT_TRUE(p_sha256(to_bytes("k"), to_bytes("s"), 0).empty());
  EXPECT_EQ(p_sha256(to_bytes("k"), to_bytes("s"), 77), p_sha256(to_bytes("k"), to_bytes("s"), 77));
}

TEST(PSha256, MatchesFrozenOracleVectors) {
  const auto vectors = fixtures::load_kdf_vectors();
  ASSERT_GE(vectors.size(), 15u);
  // First vector: secret = 0x0b * 16, seed = "test", 48 bytes.
  EXPECT_EQ(vectors[0].secret, Bytes(16, 0x0b));
  EXPECT_EQ(vectors[0].seed, to_bytes("test"));
  for (const auto& v : vectors) {
    EXPECT_EQ(p_sha256(v.secret, v.seed, v.length), v.output) << to_hex(v.secret);
  }
}

TEST(PSha256, PrefixProperty) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Bytes secret(1 + rng() % 40), seed(rng() % 40);
    for (auto& b : secret) b = static_cast<std::uint8_t>(rng());
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    const std::size_t m = rng() % 300, n = rng() % (m + 1);
    const Bytes longer = p_sha256(secret, seed, m);
    const Bytes shorter = p_sha256(secret, seed, n);
    EXPECT_TRUE(std::equal(shorter.begin(), shorter.end(), longer.begin()));
  }
}

TEST(TokenKeys, LengthsFollowSuite) {
  for (auto id : {ProfileId::Aes128Sha256RsaOaep, ProfileId::Basic256Sha256, ProfileId::Aes256Sha256RsaPss}) {
    const auto& suite = lookup_profile(id);
    auto keys = derive_token_keys(suite, Bytes(32, 1), Bytes(32, 2));
    for (const auto* k : {&keys.send, &keys.receive}) {
      EXPECT_EQ(k->signing_key.size(), 32u);
      EXPECT_EQ(k->encryption_key.size(), suite.sym_key_bytes());
      EXPECT_EQ(k->initialization_vector.size(), 16u);
    }
  }
}

TEST(TokenKeys, RoleSwapMirrorsKeys) {
  const Bytes a = SystemRandom::instance().bytes(32), b = SystemRandom::instance().bytes(32);
  auto mine = derive_token_keys(aes256(), a, b);
  auto theirs = derive_token_keys(aes256(), b, a);
  EXPECT_EQ(mine.send, theirs.receive);
  EXPECT_EQ(mine.receive, theirs.send);
  EXPECT_NE(mine.send, mine.receive);
}

TEST(TokenKeys, MatchesOracleLayout) {
  // Last two vectors in the fixture: secret = bytes 32..63, seed = bytes 0..31.
  const auto vectors = fixtures::load_kdf_vectors();
  Bytes local(32), remote(32);
  for (int i = 0; i < 32; ++i) {
    local[i] = static_cast<std::uint8_t>(i);
    remote[i] = static_cast<std::uint8_t>(32 + i);
  }
  for (auto id : {ProfileId::Aes128Sha256RsaOaep, ProfileId::Aes256Sha256RsaPss}) {
    const auto& suite = lookup_profile(id);
    const std::size_t total = 32 + suite.sym_key_bytes() + 16;
    auto it = std::find_if(vectors.begin(), vectors.end(),
                           [&](const auto& v) { return v.secret == remote && v.length == total; });
    ASSERT_NE(it, vectors.end());
    auto keys = derive_token_keys(suite, local, remote);
    Bytes joined = keys.send.signing_key;
    append(joined, keys.send.encryption_key);
    append(joined, keys.send.initialization_vector);
    EXPECT_EQ(joined, it->output);
  }
}

TEST(TokenKeys, BadNonceLength) {
  EXPECT_EQ(code_of([] { derive_token_keys(aes256(), Bytes(31), Bytes(32)); }), ErrorCode::BadNonceLength);
  EXPECT_EQ(code_of([] { derive_token_keys(aes256(), Bytes(32), Bytes(33)); }), ErrorCode::BadNonceLength);
}

TEST(Symmetric, OneBytePlaintextLayout) {
  const auto keys = fixed_keys(aes256());
  const Bytes body = symmetric_protect(keys, aes256(), to_bytes("hdr"), 1, Bytes{0x42}, SystemRandom::instance());
  EXPECT_EQ(body.size(), 16u + 48u);
  EXPECT_EQ(symmetric_protected_size(1), body.size());
  EXPECT_EQ(symmetric_unprotect(keys, aes256(), to_bytes("hdr"), 1, body), Bytes{0x42});
}

TEST(Symmetric, FreshIvPerMessage) {
  const auto keys = fixed_keys(aes256());
  const Bytes m = to_bytes("identical message");
  auto a = symmetric_protect(keys, aes256(), {}, 1, m, SystemRandom::instance());
  auto b = symmetric_protect(keys, aes256(), {}, 1, m, SystemRandom::instance());
  EXPECT_NE(a, b);
}

TEST(Symmetric, HeaderAndSequenceAreAuthenticated) {
  const auto keys = fixed_keys(aes256());
  const Bytes body = symmetric_protect(keys, aes256(), to_bytes("hdr"), 7, to_bytes("payload"), SystemRandom::instance());
  EXPECT_EQ(code_of([&] { symmetric_unprotect(keys, aes256(), to_bytes("hdR"), 7, body); }), ErrorCode::SignatureInvalid);
  EXPECT_EQ(code_of([&] { symmetric_unprotect(keys, aes256(), to_bytes("hdr"), 8, body); }), ErrorCode::SignatureInvalid);
}

TEST(Symmetric, ShortAndMisalignedBodies) {
  const auto keys = fixed_keys(aes256());
  EXPECT_EQ(code_of([&] { symmetric_unprotect(keys, aes256(), {}, 1, Bytes(16)); }), ErrorCode::BodyTooShort);
  EXPECT_EQ(code_of([&] { symmetric_unprotect(keys, aes256(), {}, 1, Bytes(50)); }), ErrorCode::PaddingInvalid);
}

TEST(Symmetric, ExhaustiveSingleBitFlips) {
  const auto keys = fixed_keys(aes256());
  const Bytes header = to_bytes("fixed-header");
  const Bytes body = symmetric_protect(keys, aes256(), header, 3, to_bytes("setpoint=42.5kW"), SystemRandom::instance());
  for (std::size_t bit = 0; bit < body.size() * 8; ++bit) {
    Bytes bad = body;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    const auto code = code_of([&] { symmetric_unprotect(keys, aes256(), header, 3, bad); });
    EXPECT_TRUE(code == ErrorCode::SignatureInvalid || code == ErrorCode::PaddingInvalid) << "bit " << bit;
  }
}

TEST(Symmetric, RandomRoundTripsAndCorruptions) {
  std::mt19937 rng(11);
  for (auto id : {ProfileId::Aes128Sha256RsaOaep, ProfileId::Basic256Sha256, ProfileId::Aes256Sha256RsaPss}) {
    const auto& suite = lookup_profile(id);
    const auto keys = fixed_keys(suite);
    for (int i = 0; i < 1000; ++i) {
      Bytes msg(rng() % 300);
      for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
      const Bytes body = symmetric_protect(keys, suite, to_bytes("h"), static_cast<std::uint32_t>(i + 1), msg,
                                           SystemRandom::instance());
      ASSERT_EQ(symmetric_unprotect(keys, suite, to_bytes("h"), static_cast<std::uint32_t>(i + 1), body), msg);
      Bytes bad = body;
      bad[rng() % bad.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
      const auto code = code_of([&] { symmetric_unprotect(keys, suite, to_bytes("h"), static_cast<std::uint32_t>(i + 1), bad); });
      ASSERT_TRUE(code == ErrorCode::SignatureInvalid || code == ErrorCode::PaddingInvalid);
    }
  }
}

TEST(Symmetric, SignOnlyRoundTripAndTamper) {
  const auto keys = fixed_keys(aes256());
  Bytes body = symmetric_sign(keys, to_bytes("h"), 1, to_bytes("visible"));
  EXPECT_EQ(body.size(), 7u + 32u);
  EXPECT_EQ(symmetric_verify(keys, to_bytes("h"), 1, body), to_bytes("visible"));
  body[0] ^= 1;
  EXPECT_EQ(code_of([&] { symmetric_verify(keys, to_bytes("h"), 1, body); }), ErrorCode::SignatureInvalid);
  EXPECT_EQ(code_of([&] { symmetric_verify(keys, to_bytes("h"), 1, Bytes(31)); }), ErrorCode::BodyTooShort);
}

TEST(Symmetric, TransportDelegatedSuitesRejected) {
  const auto& tls = lookup_profile(ProfileId::TlsRsaAes256CbcSha256);
  EXPECT_EQ(code_of([&] { derive_token_keys(tls, Bytes(32), Bytes(32)); }), ErrorCode::UnsupportedAlgorithm);
}

TEST(ConstantTime, Equality) {
  EXPECT_TRUE(constant_time_equal(Bytes{1, 2}, Bytes{1, 2}));
  EXPECT_FALSE(constant_time_equal(Bytes{1, 2}, Bytes{1, 3}));
  EXPECT_FALSE(constant_time_equal(Bytes{1, 2}, Bytes{1}));
  EXPECT_TRUE(constant_time_equal(Bytes{}, Bytes{}));
}

TEST(Keys, GenerationBoundsAndPem) {
  EXPECT_EQ(code_of([] { KeyPair::generate(1024); }), ErrorCode::KeyLengthOutOfRange);
  const auto& id = identity("pem-roundtrip");
  EXPECT_EQ(id.keys.modulus_bits(), 2048u);
  const KeyPair reloaded = KeyPair::from_pem(id.keys.private_pem());
  EXPECT_EQ(reloaded.public_key().to_der(), id.keys.public_key().to_der());
}

TEST(Certificates, SelfSignedRoundTrip) {
  const auto& id = identity("device-cert");
  EXPECT_EQ(id.cert.common_name(), "device-cert");
  EXPECT_EQ(Certificate::from_der(id.cert.der()), id.cert);
  EXPECT_EQ(Certificate::from_pem(id.cert.pem()), id.cert);
  EXPECT_EQ(id.cert.public_key().to_der(), id.keys.public_key().to_der());
  EXPECT_EQ(id.cert.thumbprint().size(), 32u);

  Bytes corrupted = id.cert.der();
  corrupted[corrupted.size() - 5] ^= 0x01;  // inside the signature
  EXPECT_EQ(code_of([&] { Certificate::from_der(corrupted); }), ErrorCode::CertificateUntrusted);
  EXPECT_EQ(code_of([] { Certificate::from_der(Bytes{1, 2, 3}); }), ErrorCode::CertificateUntrusted);
}

TEST(Asymmetric, RoundTripPerProfile) {
  const auto& a = identity("alice");
  const auto& b = identity("bob");
  for (auto id : {ProfileId::Aes128Sha256RsaOaep, ProfileId::Basic256Sha256, ProfileId::Aes256Sha256RsaPss}) {
    const auto& suite = lookup_profile(id);
    const Bytes payload = to_bytes("handshake payload for " + std::string(suite.name));
    const Bytes blob = asymmetric_protect(b.keys.public_key(), a.keys, suite, payload);
    EXPECT_EQ(blob.size() % 256, 0u);
    EXPECT_EQ(asymmetric_unprotect(b.keys, a.keys.public_key(), suite, blob), payload);
  }
}

TEST(Asymmetric, OaepDigestFollowsProfile) {
  // 2048-bit modulus: SHA-1 OAEP holds 256 - 42 = 214 bytes per block, SHA-256 OAEP 256 - 66 = 190.
  EXPECT_EQ(oaep_block_capacity(lookup_profile(ProfileId::Basic256Sha256), 256), 214u);
  EXPECT_EQ(oaep_block_capacity(lookup_profile(ProfileId::Aes256Sha256RsaPss), 256), 190u);

  // A blob produced under one OAEP digest does not decrypt under the other.
  const auto& a = identity("alice");
  const auto& b = identity("bob");
  const Bytes blob = asymmetric_protect(b.keys.public_key(), a.keys, lookup_profile(ProfileId::Basic256Sha256), to_bytes("x"));
  EXPECT_EQ(code_of([&] { asymmetric_unprotect(b.keys, a.keys.public_key(), aes256(), blob); }),
            ErrorCode::DecryptionFailed);
}

TEST(Asymmetric, MultiBlockPayload) {
  const auto& a = identity("alice");
  const auto& b = identity("bob");
  const std::size_t capacity = oaep_block_capacity(aes256(), 256);
  Bytes payload = SystemRandom::instance().bytes(2 * capacity);
  const Bytes blob = asymmetric_protect(b.keys.public_key(), a.keys, aes256(), payload);
  // payload (2 blocks) + 256-byte signature spills into a fourth block.
  EXPECT_EQ(blob.size(), 4u * 256u);
  EXPECT_EQ(asymmetric_unprotect(b.keys, a.keys.public_key(), aes256(), blob), payload);
}

TEST(Asymmetric, WrongSignerTruncationAndCeiling) {
  const auto& a = identity("alice");
  const auto& b = identity("bob");
  const auto& mallory = identity("mallory");
  const Bytes forged = asymmetric_protect(b.keys.public_key(), mallory.keys, aes256(), to_bytes("p"));
  EXPECT_EQ(code_of([&] { asymmetric_unprotect(b.keys, a.keys.public_key(), aes256(), forged); }),
            ErrorCode::SignatureInvalid);

  Bytes blob = asymmetric_protect(b.keys.public_key(), a.keys, aes256(), to_bytes("p"));
  blob.pop_back();
  EXPECT_EQ(code_of([&] { asymmetric_unprotect(b.keys, a.keys.public_key(), aes256(), blob); }),
            ErrorCode::BlockSizeMismatch);

  EXPECT_EQ(code_of([&] { asymmetric_protect(b.keys.public_key(), a.keys, aes256(), Bytes(64 * 1024 + 1)); }),
            ErrorCode::PayloadTooLarge);
}
