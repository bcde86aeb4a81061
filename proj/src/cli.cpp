// SPDX-License-Identifier: Apache-2.0
#include "secm2m/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "secm2m/config.hpp"
#include "secm2m/energy.hpp"
#include "secm2m/gateway.hpp"
#include "secm2m/harness.hpp"
#include "secm2m/profiles.hpp"

namespace secm2m::cli {
namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

/// Raised for invalid flag combinations found after CLI11 has parsed.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunSpec {
  std::string config_path;
  std::string listen;
  std::string connect;
  std::string profile;
  std::string mode;
  std::string scenario;
  std::string expect;
  std::string out;
  std::optional<std::uint64_t> seed;
  // subcommand specific
  bool dump = false;
  std::string role;
  std::string common_name;
  std::size_t bits = 2048;
  std::uint64_t duration_ms = 0;
  std::size_t polls = 1;
  std::uint64_t interval_ms = 1000;
  std::vector<std::string> writes;
};

// Parsing helpers that turn library validation errors into usage errors.
template <typename F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

ProfileId profile_flag(const RunSpec& s, ProfileId fallback) {
  if (s.profile.empty()) return fallback;
  return as_usage([&] { return lookup_profile(s.profile).id; });
}

SecurityMode mode_flag(const RunSpec& s, SecurityMode fallback) {
  if (s.mode.empty()) return fallback;
  return as_usage([&] { return wire::parse_security_mode(s.mode); });
}

KeyValueConfig load_config(const RunSpec& s) {
  if (s.config_path.empty()) return {};
  return KeyValueConfig::load(s.config_path);
}

/// Channel settings from the config file with --profile/--mode applied on top.
ChannelConfig channel_from(const RunSpec& s, KeyValueConfig kv) {
  if (!s.profile.empty()) kv.set("profile", s.profile);
  if (!s.mode.empty()) kv.set("mode", s.mode);
  return channel_config_from(kv);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

void forbid(std::initializer_list<std::pair<const char*, bool>> flags, const std::string& sub) {
  for (const auto& [name, present] : flags)
    if (present) throw UsageError(std::string(name) + " is not accepted by '" + sub + "'");
}

/// Blocks until SIGINT/SIGTERM or `duration_ms` (0 = forever).
void wait_for_shutdown(std::uint64_t duration_ms) {
  g_interrupted.store(false);
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(duration_ms);
  while (!g_interrupted.load()) {
    if (duration_ms != 0 && std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
}

energy::Value parse_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError("cannot parse value '" + text + "'");
  return v;
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
  write_text_file(file, j.dump(2) + "\n");
}

int run_profiles(const RunSpec& s, std::ostream& out) {
  if (s.dump) {
    out << dump_profile_table();
    return kOk;
  }
  for (const auto id : list_profiles()) out << profile_name(id) << "\n";
  return kOk;
}

int run_keygen(const RunSpec& s, std::ostream& out) {
  require(!s.out.empty(), "keygen needs --out DIR");
  require(!s.common_name.empty(), "keygen needs --cn NAME");
  require(s.bits >= 2048 && s.bits <= 4096, "--bits must be within 2048..4096");
  const auto keys = KeyPair::generate(s.bits);
  const auto cert = Certificate::self_signed(keys, s.common_name);
  const std::filesystem::path dir(s.out);
  write_text_file(dir / (s.common_name + ".key.pem"), keys.private_pem());
  write_text_file(dir / (s.common_name + ".cert.pem"), cert.pem());
  out << (dir / (s.common_name + ".key.pem")).string() << "\n" << (dir / (s.common_name + ".cert.pem")).string() << "\n";
  return kOk;
}

int run_device(const RunSpec& s, std::ostream& out, EventLog& events) {
  auto kv = load_config(s);
  if (s.seed) kv.set("seed", std::to_string(*s.seed));
  const Endpoint at = as_usage([&] { return parse_endpoint(s.listen.empty() ? kv.get("listen", "127.0.0.1:4840") : s.listen); });
  const auto channel = channel_from(s, kv);
  energy::DeviceState device(energy::DeviceConfig::from(kv));
  energy::DeviceServer server(device, channel, events);
  server.start(at);
  server.start_ticking();
  out << server.endpoint().to_string() << std::endl;
  events.emit("device_listening", {{"endpoint", server.endpoint().to_string()}});
  wait_for_shutdown(s.duration_ms);
  server.stop();
  events.emit("device_stopped", {{"delivered", server.delivered()}, {"connections", server.connections()}});
  return kOk;
}

int run_controller(const RunSpec& s, std::ostream& out, EventLog& events) {
  auto kv = load_config(s);
  const std::string connect = s.connect.empty() ? kv.get("connect") : s.connect;
  require(!connect.empty(), "controller needs --connect HOST:PORT");
  const Endpoint to = as_usage([&] { return parse_endpoint(connect); });

  std::vector<std::pair<std::string, energy::Value>> writes;
  for (const auto& w : s.writes) {
    const auto eq = w.find('=');
    require(eq != std::string::npos && eq > 0, "--set expects NODE=VALUE, got '" + w + "'");
    writes.emplace_back(w.substr(0, eq), parse_value(w.substr(eq + 1)));
  }
  const auto channel_cfg = channel_from(s, kv);
  const auto device_cfg = energy::DeviceConfig::from(kv);
  std::vector<std::string> nodes;
  for (const auto& [id, kind] : device_cfg.nodes) nodes.push_back(id);

  std::ofstream file;
  if (!s.out.empty()) {
    file.open(s.out);
    if (!file) throw Error(ErrorCode::InvalidConfig, "cannot write " + s.out);
  }
  energy::MeasurementLog log(s.out.empty() ? out : file);

  auto stream = TcpStream::connect(to);
  SecureChannel channel(channel_cfg, *stream, SteadyClock::instance(), events);
  channel.open();
  energy::Controller controller(channel);
  for (const auto& [id, value] : writes) log.record(controller.write(id, value));
  for (std::size_t i = 0; i < s.polls; ++i) {
    if (i != 0) std::this_thread::sleep_for(std::chrono::milliseconds(s.interval_ms));
    log.record(energy::controller_poll(controller, nodes));
  }
  channel.close();
  return kOk;
}

int run_gateway(const RunSpec& s, std::ostream& out, EventLog& events) {
  require(s.role == "near" || s.role == "far", "gateway needs --role near|far");
  auto kv = load_config(s);
  const std::string listen = s.listen.empty() ? kv.get("listen") : s.listen;
  const std::string connect = s.connect.empty() ? kv.get("connect") : s.connect;
  require(!listen.empty(), "gateway needs --listen HOST:PORT");
  require(!connect.empty(), "gateway needs --connect HOST:PORT");
  const Endpoint at = as_usage([&] { return parse_endpoint(listen); });
  const Endpoint to = as_usage([&] { return parse_endpoint(connect); });
  const auto channel = channel_from(s, kv);

  if (s.role == "near") {
    gateway::NearGateway gw(channel, to, events);
    gw.start(at);
    out << gw.endpoint().to_string() << std::endl;
    events.emit("gateway_listening", {{"role", "near"}, {"endpoint", gw.endpoint().to_string()}});
    wait_for_shutdown(s.duration_ms);
    gw.stop();
    events.emit("gateway_stopped", {{"role", "near"}, {"tunneled", gw.tunneled()}});
  } else {
    gateway::FarGateway gw(channel, to, events);
    gw.start(at);
    out << gw.endpoint().to_string() << std::endl;
    events.emit("gateway_listening", {{"role", "far"}, {"endpoint", gw.endpoint().to_string()}});
    wait_for_shutdown(s.duration_ms);
    gw.stop();
    events.emit("gateway_stopped", {{"role", "far"}, {"forwarded", gw.forwarded()}});
  }
  return kOk;
}

/// Target from flags and the optional config file. Identities are generated
/// per run; verdicts do not depend on key material.
harness::Target attack_target(const RunSpec& s, const KeyValueConfig& kv) {
  const auto profile = profile_flag(s, as_usage([&] { return lookup_profile(kv.get("profile", "Aes256-Sha256-RsaPss")).id; }));
  const auto mode = mode_flag(s, as_usage([&] { return wire::parse_security_mode(kv.get("mode", "SignAndEncrypt")); }));
  auto t = harness::Target::generate(profile, mode, s.seed.value_or(kv.get_uint("seed", 1)));
  t.workload_requests = kv.get_uint("workload_requests", t.workload_requests);
  t.replay_frames = kv.get_uint("replay_frames", t.replay_frames);
  t.rate_limit_per_s = static_cast<std::uint32_t>(kv.get_uint("rate_limit_per_s", t.rate_limit_per_s));
  t.flood_factor = static_cast<std::uint32_t>(kv.get_uint("flood_factor", t.flood_factor));
  t.flood_duration = Millis(kv.get_uint("flood_duration_ms", t.flood_duration.count()));
  t.flood_window = Millis(kv.get_uint("flood_window_ms", t.flood_window.count()));
  if (kv.has("capture_dir")) t.capture_dir = kv.path("capture_dir");
  return t;
}

int run_attack(const RunSpec& s, std::ostream& out, EventLog& events) {
  require(!s.scenario.empty(), "attack needs --scenario NAME");
  const auto scenario = as_usage([&] { return harness::parse_scenario(s.scenario); });
  std::optional<harness::Verdict> expect;
  if (!s.expect.empty()) expect = as_usage([&] { return harness::parse_verdict(s.expect); });
  const auto kv = load_config(s);
  auto target = attack_target(s, kv);
  if (!s.out.empty()) target.capture_dir = std::filesystem::path(s.out);

  const auto outcome = harness::run_attack(scenario, target, events);
  const auto j = harness::to_json(outcome);
  out << j.dump(2) << "\n";
  if (!s.out.empty()) write_json(std::filesystem::path(s.out) / (std::string(harness::to_string(scenario)) + ".json"), j);
  if (expect && !harness::meets(outcome.verdict, *expect)) {
    events.emit("expectation_failed",
                {{"verdict", harness::to_string(outcome.verdict)}, {"expected", harness::to_string(*expect)}});
    return kOperationalError;
  }
  return kOk;
}

int run_report(const RunSpec& s, std::ostream& out, EventLog& events) {
  const auto kv = load_config(s);
  const auto target = attack_target(s, kv);
  std::vector<harness::AttackOutcome> outcomes;
  const auto report = harness::assess(target, &outcomes, events);
  const auto text = harness::to_text(report);
  out << text;
  if (!s.out.empty()) {
    const std::filesystem::path dir(s.out);
    write_json(dir / "report.json", harness::to_json(report));
    write_text_file(dir / "report.txt", text);
    auto all = nlohmann::json::array();
    for (const auto& o : outcomes) all.push_back(harness::to_json(o));
    write_json(dir / "outcomes.json", all);
  }
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunSpec s;
  CLI::App app{"Secure M2M channel, smart-energy demo, Modbus gateway and attack harness", "secm2m"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--config", s.config_path, "key = value configuration file");
  app.add_option("--profile", s.profile, "security policy name");
  app.add_option("--mode", s.mode, "None, Sign or SignAndEncrypt");
  app.add_option("--seed", s.seed, "seed for device noise and generated workloads");
  app.add_option("--out", s.out, "output file or directory");

  auto* profiles = app.add_subcommand("profiles", "list security policies");
  profiles->add_flag("--dump", s.dump, "print the algorithm matrix");

  auto* keygen = app.add_subcommand("keygen", "generate an RSA key pair and self-signed certificate");
  keygen->add_option("--cn", s.common_name, "certificate common name, also the file stem")->required();
  keygen->add_option("--bits", s.bits, "RSA modulus length");

  auto* device = app.add_subcommand("device", "run the smart-energy device");
  device->add_option("--listen", s.listen, "HOST:PORT");
  device->add_option("--duration-ms", s.duration_ms, "stop after this long (0 runs until signalled)");

  auto* controller = app.add_subcommand("controller", "poll a device and print CSV measurements");
  controller->add_option("--connect", s.connect, "HOST:PORT");
  controller->add_option("--polls", s.polls, "number of polling rounds");
  controller->add_option("--interval-ms", s.interval_ms, "delay between rounds");
  controller->add_option("--set", s.writes, "NODE=VALUE written before polling");

  auto* gw = app.add_subcommand("gateway", "run one half of the Modbus/TCP gateway pair");
  gw->add_option("--role", s.role, "near or far")->required();
  gw->add_option("--listen", s.listen, "HOST:PORT");
  gw->add_option("--connect", s.connect, "HOST:PORT (far gateway, or upstream Modbus server)");
  gw->add_option("--duration-ms", s.duration_ms, "stop after this long (0 runs until signalled)");

  auto* attack = app.add_subcommand("attack", "run one attack scenario against an in-process pair");
  attack->add_option("--scenario", s.scenario, "none, replay, tamper, sniff, spoof_server, flood, downgrade_probe")
      ->required();
  attack->add_option("--expect", s.expect, "exit 0 only if the verdict is at least this");

  app.add_subcommand("report", "run every scenario and write the threat report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  EventLog events(err);
  try {
    if (*profiles) {
      forbid({{"--config", !s.config_path.empty()}, {"--seed", s.seed.has_value()}, {"--out", !s.out.empty()}},
             "profiles");
      return run_profiles(s, out);
    }
    if (*keygen) return run_keygen(s, out);
    if (*device) return run_device(s, out, events);
    if (*controller) return run_controller(s, out, events);
    if (*gw) {
      forbid({{"--seed", s.seed.has_value()}, {"--out", !s.out.empty()}}, "gateway");
      return run_gateway(s, out, events);
    }
    if (*attack) return run_attack(s, out, events);
    return run_report(s, out, events);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << "Run with --help for more information.\n";
    return kUsageError;
  } catch (const Error& e) {
    events.emit("error", {{"code", to_string(e.code())}, {"message", e.what()}});
    return kOperationalError;
  } catch (const std::exception& e) {
    events.emit("error", {{"message", e.what()}});
    return kOperationalError;
  }
}

}  // namespace secm2m::cli
