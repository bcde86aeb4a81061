// SPDX-License-Identifier: Apache-2.0
#include "secm2m/profiles.hpp"

#include <algorithm>
#include <sstream>

#include "secm2m/error.hpp"

namespace secm2m {
namespace {

const std::array<AlgorithmSuite, 5>& registry() {
  static const std::array<AlgorithmSuite, 5> suites{{
      {ProfileId::Aes128Sha256RsaOaep, "Aes128-Sha256-RsaOaep", "AES128-CBC", "HMAC-SHA2-256",
       "RSA-OAEP-SHA1", "RSA-PKCS15-SHA2-256", "RSA-PKCS15-SHA2-256", "P-SHA2-256", {16}},
      {ProfileId::Basic256Sha256, "Basic256Sha256", "AES256-CBC", "HMAC-SHA2-256", "RSA-OAEP-SHA1",
       "RSA-PKCS15-SHA2-256", "RSA-PKCS15-SHA2-256", "P-SHA2-256", {32}},
      {ProfileId::Aes256Sha256RsaPss, "Aes256-Sha256-RsaPss", "AES256-CBC", "HMAC-SHA2-256",
       "RSA-OAEP-SHA2-256", "RSA-PSS15-SHA2-256", "RSA-PKCS15-SHA2-256", "P-SHA2-256", {32}},
      {ProfileId::TlsRsaAes256CbcSha256, "TLS_RSA_AES_256_CBC_SHA256", "AES256-CBC", "HMAC-SHA2-256",
       "RSA", "RSASSA-PKCS15", "RSASSA-PKCS15", "RSASSA-PKCS15", {32}, 256, 32, 2048, 4096,
       SuiteKind::TransportDelegated},
      {ProfileId::TlsDheRsaAesCbcSha256, "TLS_DHE_RSA_AES_nnn_CBC_SHA256", "AES128/256-CBC",
       "HMAC-SHA2-256", std::nullopt, "RSASSA-PKCS15", "RSASSA-PKCS15", "DHE", {16, 32}, 256, 32,
       2048, 4096, SuiteKind::TransportDelegated},
  }};
  return suites;
}

constexpr std::array<std::string_view, 4> kUnsupported{"AES-CTR", "RSA-PKCS15", "RSA-PKCS15-SHA1",
                                                       "P-SHA1"};

}  // namespace

OaepDigest AlgorithmSuite::oaep_digest() const {
  if (asymmetric_encryption == "RSA-OAEP-SHA1") return OaepDigest::Sha1;
  if (asymmetric_encryption == "RSA-OAEP-SHA2-256") return OaepDigest::Sha256;
  throw Error(ErrorCode::UnsupportedAlgorithm, std::string(asymmetric_encryption.value_or("-")));
}

AsymSignatureScheme AlgorithmSuite::signature_scheme() const {
  if (asymmetric_signature == "RSA-PKCS15-SHA2-256") return AsymSignatureScheme::Pkcs1v15Sha256;
  // The name reads "RSA-PSS15-SHA2-256"; it is interpreted as RSASSA-PSS with SHA-256.
  if (asymmetric_signature == "RSA-PSS15-SHA2-256") return AsymSignatureScheme::PssSha256;
  throw Error(ErrorCode::UnsupportedAlgorithm, std::string(asymmetric_signature));
}

std::span<const std::string_view> unsupported_algorithms() { return kUnsupported; }

void require_supported_algorithm(std::string_view algorithm) {
  if (std::find(kUnsupported.begin(), kUnsupported.end(), algorithm) != kUnsupported.end())
    throw Error(ErrorCode::UnsupportedAlgorithm, std::string(algorithm));
}

const AlgorithmSuite& lookup_profile(std::string_view name) {
  require_supported_algorithm(name);
  for (const auto& suite : registry())
    if (suite.name == name) return suite;
  throw Error(ErrorCode::UnknownProfile, std::string(name));
}

const AlgorithmSuite& lookup_profile(ProfileId id) {
  return registry()[static_cast<std::size_t>(id)];
}

std::string_view profile_name(ProfileId id) { return lookup_profile(id).name; }

std::array<ProfileId, 5> list_profiles() {
  return {ProfileId::Aes128Sha256RsaOaep, ProfileId::Basic256Sha256, ProfileId::Aes256Sha256RsaPss,
          ProfileId::TlsRsaAes256CbcSha256, ProfileId::TlsDheRsaAesCbcSha256};
}

void validate_asym_key_length(const AlgorithmSuite& suite, std::size_t bits) {
  if (bits < suite.asym_key_min_bits || bits > suite.asym_key_max_bits)
    throw Error(ErrorCode::KeyLengthOutOfRange, std::to_string(bits) + " bits");
}

std::string dump_profile_table() {
  struct Row {
    std::string_view label;
    std::string_view (*cell)(const AlgorithmSuite&);
  };
  static constexpr Row rows[] = {
      {"Name", [](const AlgorithmSuite& s) { return s.name; }},
      {"Symmetric Encryption", [](const AlgorithmSuite& s) { return s.symmetric_encryption; }},
      {"Symmetric Signature", [](const AlgorithmSuite& s) { return s.symmetric_signature; }},
      {"Asymmetric Encryption",
       [](const AlgorithmSuite& s) { return s.asymmetric_encryption.value_or("-"); }},
      {"Asymmetric Signature", [](const AlgorithmSuite& s) { return s.asymmetric_signature; }},
      {"Certificate Signing", [](const AlgorithmSuite& s) { return s.certificate_signing; }},
      {"Key Derivation", [](const AlgorithmSuite& s) { return s.key_derivation; }},
  };
  std::ostringstream out;
  for (const auto& row : rows) {
    out << row.label;
    for (auto id : list_profiles()) out << '|' << row.cell(lookup_profile(id));
    out << '\n';
  }
  return out.str();
}

}  // namespace secm2m
