// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "secm2m/channel.hpp"

namespace secm2m {

/// Plain-text `key = value` file. '#' starts a comment; blank lines are
/// ignored; keys are unique. Relative paths resolve against the file's
/// directory.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  /// Throws InvalidConfig naming the offending line.
  static KeyValueConfig parse(std::string_view text, std::filesystem::path base_dir = {});
  static KeyValueConfig load(const std::filesystem::path& file);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  /// Numeric getters throw InvalidConfig on malformed values.
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::filesystem::path path(const std::string& key) const;
  /// Entries whose key starts with `prefix`, prefix stripped, in key order.
  std::vector<std::pair<std::string, std::string>> with_prefix(const std::string& prefix) const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::filesystem::path& base_dir() const { return base_dir_; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

/// Builds a ChannelConfig from the keys
///   profile, mode, private_key, certificate, trust (comma separated),
///   peer_certificate, token_lifetime_ms, rate_limit_per_s, max_delay_ms,
///   handshake_timeout_ms.
/// PEM files are read from disk. Throws InvalidConfig.
ChannelConfig channel_config_from(const KeyValueConfig& kv);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, std::string_view text);

}  // namespace secm2m
