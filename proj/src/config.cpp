// SPDX-License-Identifier: Apache-2.0
#include "secm2m/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace secm2m {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::filesystem::path base_dir) {
  KeyValueConfig cfg;
  cfg.base_dir_ = std::move(base_dir);
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    if (cfg.has(key))
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": duplicate key " + key);
    cfg.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& file) {
  return parse(read_text_file(file), file.parent_path());
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used == v->size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidConfig, key + ": not a number: " + *v);
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw Error(ErrorCode::InvalidConfig, key + ": not an unsigned integer: " + *v);
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw Error(ErrorCode::InvalidConfig, key + ": not a boolean: " + *v);
}

std::filesystem::path KeyValueConfig::path(const std::string& key) const {
  std::filesystem::path p = get(key);
  if (p.empty() || p.is_absolute()) return p;
  return base_dir_ / p;
}

std::vector<std::pair<std::string, std::string>> KeyValueConfig::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = values_.lower_bound(prefix); it != values_.end() && it->first.rfind(prefix, 0) == 0; ++it)
    out.emplace_back(it->first.substr(prefix.size()), it->second);
  return out;
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& file, std::string_view text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + file.string());
}

ChannelConfig channel_config_from(const KeyValueConfig& kv) {
  ChannelConfig cfg;
  try {
    cfg.profile = lookup_profile(kv.get("profile", std::string(profile_name(cfg.profile)))).id;
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  cfg.security_mode = wire::parse_security_mode(kv.get("mode", "SignAndEncrypt"));
  if (kv.has("private_key")) cfg.own_keypair = KeyPair::from_pem(read_text_file(kv.path("private_key")));
  if (kv.has("certificate")) cfg.own_certificate = Certificate::from_pem(read_text_file(kv.path("certificate")));
  for (const std::string& item : split_list(kv.get("trust"))) {
    std::filesystem::path p = item;
    if (p.is_relative()) p = kv.base_dir() / p;
    cfg.trust_store.push_back(Certificate::from_pem(read_text_file(p)));
  }
  if (kv.has("peer_certificate"))
    cfg.peer_certificate = Certificate::from_pem(read_text_file(kv.path("peer_certificate")));
  cfg.token_lifetime_ms = static_cast<std::uint32_t>(kv.get_uint("token_lifetime_ms", cfg.token_lifetime_ms));
  if (kv.has("rate_limit_per_s"))
    cfg.rate_limit_per_s = static_cast<std::uint32_t>(kv.get_uint("rate_limit_per_s", 0));
  cfg.max_artificial_delay_ms = static_cast<std::uint32_t>(kv.get_uint("max_delay_ms", cfg.max_artificial_delay_ms));
  cfg.handshake_timeout_ms =
      static_cast<std::uint32_t>(kv.get_uint("handshake_timeout_ms", cfg.handshake_timeout_ms));
  cfg.validate();
  return cfg;
}

}  // namespace secm2m
