// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "secm2m/harness.hpp"
#include "test_support.hpp"

using namespace secm2m;
using namespace secm2m::harness;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Timeout;
}

Target target(SecurityMode mode) {
  auto id = [](const char* name) { return Identity{fixtures::identity(name).keys, fixtures::identity(name).cert}; };
  Target t{ProfileId::Aes256Sha256RsaPss, mode, id("controller"), id("device"), id("rogue")};
  t.seed = 7;
  t.flood_duration = Millis(3000);
  t.flood_window = Millis(2000);
  return t;
}

void expect_accounting(const AttackOutcome& o) {
  EXPECT_EQ(o.injected, o.delivered_to_application + o.rejected) << to_json(o).dump();
}

}  // namespace

TEST(SniffCheck, FindsEveryLeakedWindow) {
  EXPECT_TRUE(sniff_check({}, {Bytes(64, 1)}).empty());
  std::mt19937_64 rng(1);
  auto random_bytes = [&](std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
  };
  std::vector<Bytes> secrets;
  for (int i = 0; i < 50; ++i) secrets.push_back(random_bytes(64));
  EXPECT_TRUE(sniff_check(random_bytes(1 << 16), secrets).empty());

  Bytes capture = random_bytes(100);
  append(capture, secrets[3]);
  append(capture, random_bytes(10));
  append(capture, ByteView(secrets[7]).subspan(20, 8));
  const auto f = sniff_check(capture, secrets);
  ASSERT_EQ(f.size(), 57u + 1u);
  EXPECT_EQ(f[0], (SniffFinding{3, 0, 100}));
  EXPECT_EQ(f.back(), (SniffFinding{7, 20, 174}));
  EXPECT_TRUE(sniff_check(capture, {Bytes(secrets[7].begin() + 20, secrets[7].begin() + 27)}).empty());
}

TEST(Verdicts, OrderingAndParsing) {
  EXPECT_EQ(parse_verdict("mitigated"), Verdict::Mitigated);
  EXPECT_EQ(parse_verdict("partially_mitigated"), Verdict::PartiallyMitigated);
  EXPECT_EQ(parse_verdict("PartiallyMitigated"), Verdict::PartiallyMitigated);
  EXPECT_EQ(parse_verdict("out-of-scope"), Verdict::OutOfScope);
  EXPECT_EQ(code_of([] { parse_verdict("safe"); }), ErrorCode::InvalidConfig);
  EXPECT_TRUE(meets(Verdict::Mitigated, Verdict::PartiallyMitigated));
  EXPECT_FALSE(meets(Verdict::PartiallyMitigated, Verdict::Mitigated));
  EXPECT_TRUE(meets(Verdict::Vulnerable, Verdict::Vulnerable));
  EXPECT_FALSE(meets(Verdict::OutOfScope, Verdict::Vulnerable));
  EXPECT_EQ(weakest(Verdict::Mitigated, Verdict::Vulnerable), Verdict::Vulnerable);
  EXPECT_EQ(parse_scenario("spoof_server"), Scenario::SpoofServer);
  EXPECT_EQ(code_of([] { parse_scenario("ddos"); }), ErrorCode::InvalidConfig);
}

TEST(Catalogue, MatchesThreatTable) {
  const auto& c = threat_catalogue();
  ASSERT_EQ(c.size(), 22u);
  std::istringstream golden(fixtures::read_file(fixtures::source_path("tests/golden/threat_table.txt")));
  std::string line;
  std::size_t i = 0;
  while (std::getline(golden, line)) {
    if (line.empty()) continue;
    const auto bar = line.find(" | ");
    ASSERT_LT(i, c.size());
    EXPECT_EQ(c[i].title, line.substr(0, bar)) << i;
    EXPECT_EQ(to_string(c[i].stride), line.substr(bar + 3)) << i;
    EXPECT_EQ(c[i].id, (i < 9 ? "T0" : "T") + std::to_string(i + 1));
    ++i;
  }
  EXPECT_EQ(i, 22u);
  for (const auto& e : c) {
    EXPECT_EQ(e.scope == Scope::Protocol, !e.evidence.empty()) << e.id;
    EXPECT_FALSE(e.rationale.empty()) << e.id;
  }
}

TEST(Catalogue, ClassificationNeedsEveryProtocolScenario) {
  std::vector<AttackOutcome> results;
  for (Scenario s : protocol_scenarios()) {
    AttackOutcome o;
    o.scenario = s;
    o.verdict = Verdict::Mitigated;
    if (s == Scenario::Sniff) o.facets = {{"downstream", Verdict::Mitigated}, {"upstream", Verdict::Vulnerable}};
    results.push_back(o);
  }
  const ThreatReport r = classify_threats(results, ProfileId::Aes256Sha256RsaPss, SecurityMode::SignAndEncrypt);
  EXPECT_EQ(r.by_id("T12").verdict, Verdict::Mitigated);
  EXPECT_EQ(r.by_id("T13").verdict, Verdict::Vulnerable);
  const std::map<StrideClass, int> expected = {{StrideClass::DenialOfService, 4}, {StrideClass::ElevationOfPrivilege, 6},
                                               {StrideClass::InformationDisclosure, 3}, {StrideClass::Repudiation, 2},
                                               {StrideClass::Spoofing, 3}, {StrideClass::Tampering, 4}};
  EXPECT_EQ(r.histogram(), expected);

  for (std::size_t skip = 0; skip < results.size(); ++skip) {
    auto partial = results;
    partial.erase(partial.begin() + static_cast<std::ptrdiff_t>(skip));
    EXPECT_EQ(code_of([&] { classify_threats(partial, ProfileId::Aes256Sha256RsaPss, SecurityMode::Sign); }),
              ErrorCode::IncompleteEvidence);
  }
  auto no_facets = results;
  no_facets[2].facets.clear();
  EXPECT_EQ(code_of([&] { classify_threats(no_facets, ProfileId::Aes256Sha256RsaPss, SecurityMode::Sign); }),
            ErrorCode::IncompleteEvidence);
}

TEST(Catalogue, CollisionRowChecksSha2Registry) {
  for (ProfileId p : list_profiles()) {
    const auto& s = lookup_profile(p);
    EXPECT_EQ(signatures_are_sha2(s), s.native()) << s.name;
  }
}

TEST(Scenarios, SecuredPairResistsEveryAttack) {
  const Target t = target(SecurityMode::SignAndEncrypt);

  const AttackOutcome replay = run_attack(Scenario::Replay, t);
  EXPECT_EQ(replay.injected, 50u);
  EXPECT_EQ(replay.rejected, 50u);
  EXPECT_EQ(replay.delivered_to_application, 0u);
  EXPECT_EQ(replay.verdict, Verdict::Mitigated);

  const AttackOutcome tamper = run_attack(Scenario::Tamper, t);
  EXPECT_EQ(tamper.injected, t.workload_requests);
  EXPECT_EQ(tamper.delivered_to_application, 0u);
  EXPECT_EQ(tamper.verdict, Verdict::Mitigated);
  expect_accounting(tamper);

  const AttackOutcome sniff = run_attack(Scenario::Sniff, t);
  EXPECT_EQ(sniff.verdict, Verdict::Mitigated) << to_json(sniff).dump();

  const AttackOutcome spoof = run_attack(Scenario::SpoofServer, t);
  EXPECT_EQ(spoof.observations["rogue_server"], "CertificateUntrusted");
  EXPECT_EQ(spoof.observations["rogue_client"], "CertificateUntrusted");
  EXPECT_EQ(spoof.verdict, Verdict::Mitigated);
  expect_accounting(spoof);

  const AttackOutcome downgrade = run_attack(Scenario::DowngradeProbe, t);
  EXPECT_EQ(downgrade.observations["rewritten_handshake"], "ProfileMismatch");
  EXPECT_EQ(downgrade.observations["weaker_offer"], "ProfileMismatch");
  EXPECT_EQ(downgrade.verdict, Verdict::Mitigated);

  const AttackOutcome control = run_attack(Scenario::None, t);
  EXPECT_TRUE(control.observations["transparent"].get<bool>());
  EXPECT_EQ(control.verdict, Verdict::Mitigated);
}

TEST(Scenarios, ReplayCheckIsLoadBearing) {
  Target t = target(SecurityMode::SignAndEncrypt);
  t.evaluate_sequence_numbers = false;
  const AttackOutcome o = run_attack(Scenario::Replay, t);
  EXPECT_GE(o.delivered_to_application, 1u);
  EXPECT_EQ(o.verdict, Verdict::Vulnerable);
  expect_accounting(o);
}

TEST(Scenarios, UnprotectedPairIsExposed) {
  const Target t = target(SecurityMode::None);
  const AttackOutcome sniff = run_attack(Scenario::Sniff, t);
  EXPECT_EQ(sniff.verdict, Verdict::Vulnerable);
  EXPECT_EQ(sniff.observations["downstream_leaked_payloads"], t.workload_requests);
  EXPECT_EQ(sniff.observations["upstream_leaked_payloads"], t.workload_requests);

  const AttackOutcome tamper = run_attack(Scenario::Tamper, t);
  EXPECT_EQ(tamper.verdict, Verdict::Vulnerable);
  EXPECT_EQ(tamper.delivered_to_application, tamper.injected);
  expect_accounting(tamper);

  const AttackOutcome spoof = run_attack(Scenario::SpoofServer, t);
  EXPECT_EQ(spoof.verdict, Verdict::Vulnerable);

  const Target sign = target(SecurityMode::Sign);
  EXPECT_EQ(run_attack(Scenario::Sniff, sign).verdict, Verdict::Vulnerable);
  EXPECT_EQ(run_attack(Scenario::Tamper, sign).verdict, Verdict::Mitigated);
}

TEST(Scenarios, FloodIsThrottledNotFatal) {
  const Target t = target(SecurityMode::SignAndEncrypt);
  const AttackOutcome o = run_attack(Scenario::Flood, t);
  EXPECT_EQ(o.verdict, Verdict::PartiallyMitigated) << to_json(o).dump();
  EXPECT_LE(o.observations["processed_per_s_final_window"].get<double>(), 55.0);
  EXPECT_GT(o.observations["offered_per_s"].get<double>(), 400.0);
  EXPECT_TRUE(o.observations["device_channel_open"].get<bool>());
}

TEST(Scenarios, CapturesWithFrameIndex) {
  Target t = target(SecurityMode::SignAndEncrypt);
  const auto dir = std::filesystem::temp_directory_path() / "secm2m_capture_test";
  std::filesystem::remove_all(dir);
  t.capture_dir = dir;
  run_attack(Scenario::Replay, t);
  const Bytes down = to_bytes(fixtures::read_file((dir / "replay.downstream.bin").string()));
  std::istringstream idx(fixtures::read_file((dir / "replay.idx").string()));
  std::string line;
  std::size_t frames = 0, injected = 0, covered = 0;
  while (std::getline(idx, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["direction"] != "downstream") continue;
    ++frames;
    injected += j["injected"].get<bool>();
    EXPECT_EQ(j["offset"].get<std::size_t>(), covered);
    const auto m = wire::decode_frame(ByteView(down).subspan(covered, j["length"].get<std::size_t>())).msg;
    EXPECT_EQ(j["length"].get<std::size_t>(), wire::kHeaderBytes + m.body.size());
    covered += j["length"].get<std::size_t>();
  }
  EXPECT_EQ(covered, down.size());
  EXPECT_EQ(injected, 50u);
  EXPECT_GT(frames, 100u);
  std::filesystem::remove_all(dir);
}

TEST(Report, MonotoneAcrossModesAndDeterministic) {
  std::map<SecurityMode, ThreatReport> reports;
  for (SecurityMode m : {SecurityMode::None, SecurityMode::Sign, SecurityMode::SignAndEncrypt})
    reports.emplace(m, assess(target(m)));
  EXPECT_TRUE(monotonicity_violations(reports.at(SecurityMode::None), reports.at(SecurityMode::Sign)).empty());
  EXPECT_TRUE(
      monotonicity_violations(reports.at(SecurityMode::Sign), reports.at(SecurityMode::SignAndEncrypt)).empty());
  EXPECT_TRUE(
      monotonicity_violations(reports.at(SecurityMode::None), reports.at(SecurityMode::SignAndEncrypt)).empty());

  const ThreatReport& best = reports.at(SecurityMode::SignAndEncrypt);
  EXPECT_EQ(best.by_id("T19").verdict, Verdict::Mitigated);
  EXPECT_EQ(best.by_id("T13").verdict, Verdict::Mitigated);
  EXPECT_EQ(best.by_id("T02").verdict, Verdict::PartiallyMitigated);
  EXPECT_EQ(best.by_id("T08").verdict, Verdict::OutOfScope);
  EXPECT_EQ(reports.at(SecurityMode::None).by_id("T12").verdict, Verdict::Vulnerable);

  const auto again = assess(target(SecurityMode::SignAndEncrypt));
  EXPECT_EQ(to_json(again).dump(2), to_json(best).dump(2));
  EXPECT_EQ(to_text(again), to_text(best));
  EXPECT_EQ(to_json(best).dump().find("injected"), std::string::npos);
}
