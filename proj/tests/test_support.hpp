// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openssl/sha.h>

#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "secm2m/channel.hpp"
#include "secm2m/crypto.hpp"

#ifndef SECM2M_SOURCE_DIR
#error "SECM2M_SOURCE_DIR must point at the repository root"
#endif

namespace secm2m::fixtures {

inline std::string source_path(const std::string& rel) { return std::string(SECM2M_SOURCE_DIR) + "/" + rel; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Identity {
  KeyPair keys;
  Certificate cert;
};

/// RSA generation dominates test time, so identities are generated once per
/// (name, bits) and shared.
inline const Identity& identity(const std::string& name, std::size_t bits = 2048) {
  static std::mutex mutex;
  static std::map<std::pair<std::string, std::size_t>, Identity> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_pair(name, bits);
  auto it = cache.find(key);
  if (it == cache.end()) {
    KeyPair kp = KeyPair::generate(bits);
    Certificate cert = Certificate::self_signed(kp, name);
    it = cache.emplace(key, Identity{kp, cert}).first;
  }
  return it->second;
}

/// Client/server configs with mutually pinned certificates.
inline std::pair<ChannelConfig, ChannelConfig> pinned_pair(ProfileId profile = ProfileId::Aes256Sha256RsaPss,
                                                           SecurityMode mode = SecurityMode::SignAndEncrypt) {
  const Identity& client = identity("controller");
  const Identity& server = identity("device");
  ChannelConfig c;
  c.profile = profile;
  c.security_mode = mode;
  c.own_keypair = client.keys;
  c.own_certificate = client.cert;
  c.trust_store = {server.cert};
  ChannelConfig s = c;
  s.own_keypair = server.keys;
  s.own_certificate = server.cert;
  s.trust_store = {client.cert};
  return {c, s};
}

/// Transport decorator recording both directions.
class Recorder final : public Transport {
 public:
  explicit Recorder(Transport& inner) : inner_(inner) {}
  void write_all(ByteView data) override {
    {
      std::lock_guard lock(mutex_);
      append(written_, data);
    }
    inner_.write_all(data);
  }
  void read_exact(std::span<std::uint8_t> out) override {
    inner_.read_exact(out);
    std::lock_guard lock(mutex_);
    append(read_, out);
  }
  void close() override { inner_.close(); }
  void set_read_timeout(Millis t) override { inner_.set_read_timeout(t); }
  Bytes written() {
    std::lock_guard lock(mutex_);
    return written_;
  }
  Bytes read() {
    std::lock_guard lock(mutex_);
    return read_;
  }

 private:
  Transport& inner_;
  std::mutex mutex_;
  Bytes written_, read_;
};

// --- independent HMAC-SHA-256 chain oracle ----------------------------------
// Built from the raw SHA-256 compression API and the RFC 2104 definition, not
// from the library's HMAC path.

inline Bytes oracle_sha256(const Bytes& data) {
  Bytes out(SHA256_DIGEST_LENGTH);
  SHA256(data.data(), data.size(), out.data());
  return out;
}

inline Bytes oracle_hmac(Bytes key, const Bytes& msg) {
  constexpr std::size_t kBlock = 64;
  if (key.size() > kBlock) key = oracle_sha256(key);
  key.resize(kBlock, 0);
  Bytes inner(kBlock), outer(kBlock);
  for (std::size_t i = 0; i < kBlock; ++i) {
    inner[i] = key[i] ^ 0x36;
    outer[i] = key[i] ^ 0x5c;
  }
  inner.insert(inner.end(), msg.begin(), msg.end());
  const Bytes ih = oracle_sha256(inner);
  outer.insert(outer.end(), ih.begin(), ih.end());
  return oracle_sha256(outer);
}

inline Bytes oracle_p_sha256(const Bytes& secret, const Bytes& seed, std::size_t length) {
  Bytes out;
  Bytes a = seed;
  while (out.size() < length) {
    a = oracle_hmac(secret, a);
    Bytes in = a;
    in.insert(in.end(), seed.begin(), seed.end());
    const Bytes block = oracle_hmac(secret, in);
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(length);
  return out;
}

struct KdfVector {
  Bytes secret;
  Bytes seed;
  std::size_t length;
  Bytes output;
};

/// Vectors frozen from tests/oracle/p_sha256_oracle.py.
inline std::vector<KdfVector> load_kdf_vectors() {
  std::vector<KdfVector> out;
  std::istringstream in(read_file(source_path("tests/fixtures/p_sha256_vectors.txt")));
  std::string line;
  auto field = [](const std::string& s) { return s == "-" ? Bytes{} : from_hex(s); };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string secret, seed, output;
    std::size_t length = 0;
    ls >> secret >> seed >> length >> output;
    out.push_back({field(secret), field(seed), length, from_hex(output)});
  }
  return out;
}

}  // namespace secm2m::fixtures
