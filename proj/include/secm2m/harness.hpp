// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "secm2m/channel.hpp"
#include "secm2m/energy.hpp"
#include "secm2m/proxy.hpp"

namespace secm2m::harness {

enum class Scenario { None, Replay, Tamper, Sniff, SpoofServer, Flood, DowngradeProbe };
std::string_view to_string(Scenario s);
/// Accepts the names printed by to_string. Throws InvalidConfig.
Scenario parse_scenario(std::string_view text);
/// The scenarios threat classification needs, in execution order.
const std::vector<Scenario>& protocol_scenarios();

/// Ordered Vulnerable < PartiallyMitigated < Mitigated; OutOfScope stands apart.
enum class Verdict { Vulnerable, PartiallyMitigated, Mitigated, OutOfScope };
std::string_view to_string(Verdict v);
/// Case-insensitive; underscores and hyphens ignored. Throws InvalidConfig.
Verdict parse_verdict(std::string_view text);
/// True when `actual` is at least as strong as `expected`. OutOfScope only
/// meets OutOfScope.
bool meets(Verdict actual, Verdict expected);
Verdict weakest(Verdict a, Verdict b);

struct AttackOutcome {
  Scenario scenario = Scenario::None;
  std::size_t injected = 0;
  std::size_t delivered_to_application = 0;
  std::size_t rejected = 0;
  nlohmann::json observations = nlohmann::json::object();
  Verdict verdict = Verdict::Vulnerable;
  /// Per-aspect verdicts where one scenario covers several threats
  /// (sniff: "downstream", "upstream").
  std::map<std::string, Verdict> facets;
};
nlohmann::json to_json(const AttackOutcome& o);

struct Identity {
  KeyPair keys;
  Certificate cert;
  static Identity generate(const std::string& common_name, std::size_t bits = 2048);
};

/// Endpoint pair under test plus scenario knobs.
struct Target {
  ProfileId profile = ProfileId::Aes256Sha256RsaPss;
  SecurityMode mode = SecurityMode::SignAndEncrypt;
  Identity controller;
  Identity device;
  Identity rogue;  // never pinned by either endpoint
  std::uint64_t seed = 1;
  std::size_t workload_requests = 60;
  std::size_t replay_frames = 50;
  std::uint32_t rate_limit_per_s = 50;
  std::uint32_t flood_factor = 10;
  Millis flood_duration{10000};
  Millis flood_window{5000};  // measured at the end of the flood
  /// Test-only switch forwarded to the device channel.
  bool evaluate_sequence_numbers = true;
  /// When set, each scenario writes <dir>/<scenario>.{downstream,upstream}.bin
  /// and <scenario>.idx.
  std::optional<std::filesystem::path> capture_dir = std::nullopt;

  /// Fresh 2048-bit identities for controller, device and rogue.
  static Target generate(ProfileId profile, SecurityMode mode, std::uint64_t seed = 1);
  ChannelConfig controller_config() const;
  ChannelConfig device_config() const;
};

/// Runs one scenario against a freshly started controller/device pair with a
/// man-in-the-middle proxy on the link. Throws ScenarioSetupFailure when the
/// pair cannot be brought up.
AttackOutcome run_attack(Scenario scenario, const Target& target, EventLog& events = null_event_log());

struct SniffFinding {
  std::size_t secret = 0;          // index into the secrets list
  std::size_t secret_offset = 0;   // start of the leaked window in the secret
  std::size_t capture_offset = 0;  // first occurrence in the capture

  bool operator==(const SniffFinding&) const = default;
};

/// Every (secret, offset) whose `window`-byte substring occurs in `capture`.
std::vector<SniffFinding> sniff_check(ByteView capture, const std::vector<Bytes>& secrets, std::size_t window = 8);

// --- threat catalogue ---------------------------------------------------------

enum class StrideClass { Spoofing, Tampering, Repudiation, InformationDisclosure, DenialOfService, ElevationOfPrivilege };
std::string_view to_string(StrideClass c);
enum class Scope { Protocol, Client, Infrastructure, Logging };
std::string_view to_string(Scope s);

struct EvidenceRef {
  Scenario scenario;
  std::string facet;  // empty: the scenario's overall verdict
};

struct CatalogueEntry {
  std::string id;
  std::string title;
  StrideClass stride;
  Scope scope;
  /// Protocol scope: scenarios whose weakest verdict decides the row.
  std::vector<EvidenceRef> evidence;
  /// Verdict for non-protocol rows, with its rationale.
  std::string rationale;
  /// Collision row: additionally requires every signature algorithm of the
  /// profile to be SHA-2 based.
  bool requires_sha2_registry = false;
};

/// The 22 rows of the threat overview, in table order.
const std::vector<CatalogueEntry>& threat_catalogue();

struct Threat {
  std::string id;
  std::string title;
  StrideClass stride;
  Scope scope;
  Verdict verdict;
  std::vector<std::string> evidence;  // scenario[.facet] names
  std::string rationale;
};

struct ThreatReport {
  std::string profile;
  std::string mode;
  std::vector<Threat> threats;
  std::map<std::string, Verdict> additional;  // scenarios outside the table
  std::vector<std::string> notes;

  std::map<StrideClass, int> histogram() const;
  const Threat& by_id(const std::string& id) const;
};

/// True when every signature algorithm named by the profile is SHA-2 based.
bool signatures_are_sha2(const AlgorithmSuite& suite);

/// Throws IncompleteEvidence when a protocol-scope row lacks its scenario.
ThreatReport classify_threats(const std::vector<AttackOutcome>& results, ProfileId profile, SecurityMode mode);

/// Runs every protocol scenario plus downgrade_probe and classifies.
ThreatReport assess(const Target& target, std::vector<AttackOutcome>* outcomes = nullptr,
                    EventLog& events = null_event_log());

/// Deterministic given the verdicts: no counts, timings or key material.
nlohmann::json to_json(const ThreatReport& r);
std::string to_text(const ThreatReport& r);

/// Rows whose verdict in `stronger` is worse than in `weaker`.
std::vector<std::string> monotonicity_violations(const ThreatReport& weaker, const ThreatReport& stronger);

}  // namespace secm2m::harness
