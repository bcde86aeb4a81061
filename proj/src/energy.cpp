// SPDX-License-Identifier: Apache-2.0
#include "secm2m/energy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <set>
#include <sstream>

namespace secm2m::energy {

namespace {

constexpr std::uint8_t kValueNone = 0, kValueNumber = 1, kValueBool = 2;
constexpr std::uint8_t kStatusOk = 0, kStatusError = 1;

struct Reader {
  ByteView b;
  std::size_t at = 0;

  void need(std::size_t n) const {
    if (b.size() - at < n) throw Error(ErrorCode::MalformedPayload, "application payload truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b[at++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = get_u16be(b, at);
    at += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    const auto v = get_u32be(b, at);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::string str() {
    const std::size_t n = u16();
    need(n);
    std::string s(b.begin() + static_cast<std::ptrdiff_t>(at), b.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return s;
  }
  std::optional<Value> value() {
    switch (u8()) {
      case kValueNone:
        return std::nullopt;
      case kValueNumber:
        return Value(std::bit_cast<double>(u64()));
      case kValueBool: {
        const std::uint8_t v = u8();
        if (v > 1) throw Error(ErrorCode::MalformedPayload, "boolean out of range");
        return Value(v == 1);
      }
      default:
        throw Error(ErrorCode::MalformedPayload, "unknown value tag");
    }
  }
  void finish() const {
    if (at != b.size()) throw Error(ErrorCode::MalformedPayload, "trailing bytes in application payload");
  }
};

void put_u64be(Bytes& out, std::uint64_t v) {
  put_u32be(out, static_cast<std::uint32_t>(v >> 32));
  put_u32be(out, static_cast<std::uint32_t>(v));
}

void put_str(Bytes& out, std::string_view s) {
  if (s.size() > 0xFFFF) throw Error(ErrorCode::MalformedPayload, "string longer than 65535 bytes");
  put_u16be(out, static_cast<std::uint16_t>(s.size()));
  append(out, to_bytes(s));
}

void put_value(Bytes& out, const std::optional<Value>& v) {
  if (!v) {
    out.push_back(kValueNone);
  } else if (const double* d = std::get_if<double>(&*v)) {
    out.push_back(kValueNumber);
    put_u64be(out, std::bit_cast<std::uint64_t>(*d));
  } else {
    out.push_back(kValueBool);
    out.push_back(std::get<bool>(*v) ? 1 : 0);
  }
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::VoltageV: return "VoltageV";
    case NodeKind::CurrentA: return "CurrentA";
    case NodeKind::ActivePowerKW: return "ActivePowerKW";
    case NodeKind::SetpointKW: return "SetpointKW";
    case NodeKind::BreakerClosed: return "BreakerClosed";
  }
  return "?";
}

NodeKind parse_node_kind(std::string_view text) {
  for (NodeKind k : {NodeKind::VoltageV, NodeKind::CurrentA, NodeKind::ActivePowerKW, NodeKind::SetpointKW,
                     NodeKind::BreakerClosed})
    if (to_string(k) == text) return k;
  throw Error(ErrorCode::InvalidConfig, "unknown node kind " + std::string(text));
}

bool is_writable(NodeKind kind) { return kind == NodeKind::SetpointKW || kind == NodeKind::BreakerClosed; }

std::string format_value(const Value& v) {
  if (const bool* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  std::ostringstream s;
  s << std::setprecision(10) << std::get<double>(v);
  return s.str();
}

void DeviceConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be in (0, 1]");
  if (!(setpoint_min_kw <= setpoint_max_kw) || setpoint_min_kw < -kPowerLimitKw || setpoint_max_kw > kPowerLimitKw)
    throw Error(ErrorCode::InvalidConfig, "setpoint envelope must lie inside [-100, 100] kW");
  if (!(voltage_noise >= 0.0) || !(nominal_voltage_v > 0.0) ||
      nominal_voltage_v * (1.0 + voltage_noise) > kVoltageMaxV)
    throw Error(ErrorCode::InvalidConfig, "voltage model must stay inside [0, 500] V");
  if (tick_ms == 0) throw Error(ErrorCode::InvalidConfig, "tick_ms must be positive");
  std::set<std::string> seen;
  for (const auto& [id, kind] : nodes) {
    if (id.empty() || id.size() > 0xFFFF) throw Error(ErrorCode::InvalidConfig, "bad node id");
    if (!seen.insert(id).second) throw Error(ErrorCode::InvalidConfig, "duplicate node id " + id);
  }
}

DeviceConfig DeviceConfig::from(const KeyValueConfig& kv) {
  DeviceConfig c;
  c.alpha = kv.get_double("alpha", c.alpha);
  c.setpoint_min_kw = kv.get_double("setpoint_min", c.setpoint_min_kw);
  c.setpoint_max_kw = kv.get_double("setpoint_max", c.setpoint_max_kw);
  c.nominal_voltage_v = kv.get_double("nominal_voltage", c.nominal_voltage_v);
  c.voltage_noise = kv.get_double("voltage_noise", c.voltage_noise);
  c.seed = kv.get_uint("seed", c.seed);
  c.tick_ms = static_cast<std::uint32_t>(kv.get_uint("tick_ms", c.tick_ms));
  const auto nodes = kv.with_prefix("node.");
  if (!nodes.empty()) {
    c.nodes.clear();
    for (const auto& [id, kind] : nodes) c.nodes.emplace_back(id, parse_node_kind(kind));
  }
  c.validate();
  return c;
}

DeviceState::DeviceState(DeviceConfig config, Clock& clock)
    : config_(std::move(config)), clock_(clock), started_(clock.now()), noise_(config_.seed) {
  config_.validate();
  sample_bus();
}

void DeviceState::sample_bus() {
  const double u = config_.voltage_noise > 0.0 ? noise_.uniform(-1.0, 1.0) : 0.0;
  voltage_v_ = std::clamp(config_.nominal_voltage_v * (1.0 + config_.voltage_noise * u), 0.0, kVoltageMaxV);
  current_a_ = voltage_v_ > 0.0 ? power_kw_ * 1000.0 / voltage_v_ : 0.0;
}

void DeviceState::tick() {
  const double target = breaker_closed_ ? setpoint_kw_ : 0.0;
  power_kw_ = std::clamp(power_kw_ + config_.alpha * (target - power_kw_), -kPowerLimitKw, kPowerLimitKw);
  sample_bus();
  ++ticks_;
}

std::optional<NodeKind> DeviceState::kind_of(std::string_view node_id) const {
  for (const auto& [id, kind] : config_.nodes)
    if (id == node_id) return kind;
  return std::nullopt;
}

Value DeviceState::value_of(NodeKind kind) const {
  switch (kind) {
    case NodeKind::VoltageV: return voltage_v_;
    case NodeKind::CurrentA: return current_a_;
    case NodeKind::ActivePowerKW: return power_kw_;
    case NodeKind::SetpointKW: return setpoint_kw_;
    case NodeKind::BreakerClosed: return breaker_closed_;
  }
  return 0.0;
}

NodeValue DeviceState::read_node(std::string_view node_id) const {
  const auto kind = kind_of(node_id);
  if (!kind) throw Error(ErrorCode::UnknownNode, std::string(node_id));
  const auto ts = std::chrono::duration_cast<Millis>(clock_.now() - started_).count();
  return NodeValue{std::string(node_id), *kind, value_of(*kind), ts};
}

NodeValue DeviceState::write_setpoint(std::string_view node_id, const Value& value) {
  const auto kind = kind_of(node_id);
  if (!kind) throw Error(ErrorCode::UnknownNode, std::string(node_id));
  if (!is_writable(*kind)) throw Error(ErrorCode::ReadOnlyNode, std::string(node_id));
  if (*kind == NodeKind::BreakerClosed) {
    const bool* b = std::get_if<bool>(&value);
    if (b == nullptr) throw Error(ErrorCode::ValidationError, "breaker takes a boolean");
    breaker_closed_ = *b;
  } else {
    const double* d = std::get_if<double>(&value);
    if (d == nullptr) throw Error(ErrorCode::ValidationError, "setpoint takes a number");
    if (!std::isfinite(*d) || *d < config_.setpoint_min_kw || *d > config_.setpoint_max_kw)
      throw Error(ErrorCode::ValidationError, format_value(*d) + " kW outside envelope [" +
                                                  format_value(config_.setpoint_min_kw) + ", " +
                                                  format_value(config_.setpoint_max_kw) + "]");
    setpoint_kw_ = *d;
  }
  return read_node(node_id);
}

std::vector<NodeValue> DeviceState::snapshot() const {
  std::vector<NodeValue> out;
  for (const auto& [id, kind] : config_.nodes) out.push_back(read_node(id));
  return out;
}

std::vector<std::string> DeviceState::node_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, kind] : config_.nodes) out.push_back(id);
  return out;
}

Bytes encode_request(const Request& r) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(r.op));
  put_str(out, r.node_id);
  put_value(out, r.value);
  return out;
}

Request decode_request(ByteView b) {
  Reader r{b};
  Request req;
  const std::uint8_t op = r.u8();
  if (op != static_cast<std::uint8_t>(Op::Read) && op != static_cast<std::uint8_t>(Op::Write))
    throw Error(ErrorCode::MalformedPayload, "unknown op " + std::to_string(op));
  req.op = static_cast<Op>(op);
  req.node_id = r.str();
  req.value = r.value();
  r.finish();
  if ((req.op == Op::Write) != req.value.has_value())
    throw Error(ErrorCode::MalformedPayload, "writes carry a value, reads do not");
  return req;
}

Bytes encode_response(const Response& r) {
  Bytes out;
  if (r.value) {
    out.push_back(kStatusOk);
    out.push_back(static_cast<std::uint8_t>(r.value->kind));
    put_str(out, r.value->node_id);
    put_value(out, r.value->value);
    put_u64be(out, static_cast<std::uint64_t>(r.value->timestamp_ms));
  } else {
    out.push_back(kStatusError);
    put_u32be(out, static_cast<std::uint32_t>(r.error));
    put_str(out, r.message.substr(0, 0xFFFF));
  }
  return out;
}

Response decode_response(ByteView b) {
  Reader r{b};
  Response resp;
  const std::uint8_t status = r.u8();
  if (status == kStatusOk) {
    NodeValue v;
    const std::uint8_t kind = r.u8();
    if (kind < static_cast<std::uint8_t>(NodeKind::VoltageV) || kind > static_cast<std::uint8_t>(NodeKind::BreakerClosed))
      throw Error(ErrorCode::MalformedPayload, "unknown node kind");
    v.kind = static_cast<NodeKind>(kind);
    v.node_id = r.str();
    const auto value = r.value();
    if (!value) throw Error(ErrorCode::MalformedPayload, "response without value");
    v.value = *value;
    v.timestamp_ms = static_cast<std::int64_t>(r.u64());
    resp.value = std::move(v);
  } else if (status == kStatusError) {
    resp.error = static_cast<ErrorCode>(r.u32());
    resp.message = r.str();
  } else {
    throw Error(ErrorCode::MalformedPayload, "unknown status");
  }
  r.finish();
  return resp;
}

Bytes handle_request(DeviceState& device, ByteView request) {
  Response resp;
  try {
    const Request req = decode_request(request);
    resp.value = req.op == Op::Read ? device.read_node(req.node_id) : device.write_setpoint(req.node_id, *req.value);
  } catch (const Error& e) {
    resp.value.reset();
    resp.error = e.code();
    resp.message = e.what();
  }
  return encode_response(resp);
}

DeviceServer::DeviceServer(DeviceState& device, ChannelConfig channel, EventLog& events, Clock& clock)
    : device_(device),
      channel_(std::move(channel)),
      events_(events),
      clock_(clock),
      tcp_([this](TcpStream& s) { serve(s); }) {
  channel_.validate();
}

DeviceServer::~DeviceServer() { stop(); }

void DeviceServer::start(const Endpoint& at) { tcp_.start(at); }

void DeviceServer::start_ticking() {
  ticker_ = std::thread([this] {
    const Millis period(device_.config().tick_ms);
    auto next = std::chrono::steady_clock::now() + period;
    while (!stopping_) {
      std::this_thread::sleep_for(Millis(20));
      if (std::chrono::steady_clock::now() < next) continue;
      next += period;
      std::lock_guard lock(device_mutex_);
      device_.tick();
    }
  });
}

Endpoint DeviceServer::endpoint() const { return tcp_.endpoint(); }

void DeviceServer::serve(Transport& transport) {
  auto phase = std::make_shared<std::atomic<ChannelPhase>>(ChannelPhase::Opening);
  {
    std::lock_guard lock(conn_mutex_);
    phases_.push_back(phase);
  }
  ++connections_;
  SecureChannel channel(channel_, transport, clock_, events_);
  try {
    channel.accept(context_);
    phase->store(channel.phase());
    while (auto delivery = channel.receive()) {
      ++delivered_;
      if (hook_) hook_(*delivery);
      Bytes response;
      {
        std::lock_guard lock(device_mutex_);
        response = handle_request(device_, delivery->payload);
      }
      channel.send(delivery->request_id, response);
      phase->store(channel.phase());
    }
  } catch (const Error& e) {
    if (!stopping_) events_.emit("connection_ended", {{"error", std::string(to_string(e.code()))}});
  }
  // After stop() the last observed phase stands; the forced close is ours.
  if (!stopping_) phase->store(channel.phase());
  transport.close();
}

std::vector<ChannelPhase> DeviceServer::channel_phases() const {
  std::lock_guard lock(conn_mutex_);
  std::vector<ChannelPhase> out;
  for (const auto& p : phases_) out.push_back(p->load());
  return out;
}

void DeviceServer::with_device(const std::function<void(DeviceState&)>& f) {
  std::lock_guard lock(device_mutex_);
  f(device_);
}

void DeviceServer::stop() {
  if (stopping_.exchange(true)) return;
  tcp_.stop();
  if (ticker_.joinable()) ticker_.join();
}

Controller::Controller(SecureChannel& channel, Millis timeout) : channel_(channel), transport_(&channel.transport()) {
  transport_->set_read_timeout(timeout);
}

Response Controller::call(const Request& request) {
  const std::uint32_t id = next_request_id_++;
  channel_.send(id, encode_request(request));
  for (;;) {
    auto delivery = channel_.receive();
    if (!delivery) throw Error(ErrorCode::TransportError, "channel closed by device");
    if (delivery->request_id == id) return decode_response(delivery->payload);
  }
}

NodeValue Controller::read(const std::string& node_id) {
  Response r = call({Op::Read, node_id, std::nullopt});
  if (!r.ok()) throw Error(r.error, r.message);
  return *r.value;
}

NodeValue Controller::write(const std::string& node_id, const Value& value) {
  Response r = call({Op::Write, node_id, value});
  if (!r.ok()) throw Error(r.error, r.message);
  return *r.value;
}

std::vector<NodeValue> controller_poll(Controller& controller, const std::vector<std::string>& node_ids) {
  std::vector<NodeValue> out;
  out.reserve(node_ids.size());
  for (const auto& id : node_ids) out.push_back(controller.read(id));
  return out;
}

MeasurementLog::MeasurementLog(std::ostream& out) : out_(out) { out_ << "timestamp_ms,node_id,value\n"; }

void MeasurementLog::record(const NodeValue& v) {
  out_ << v.timestamp_ms << ',' << v.node_id << ',' << format_value(v.value) << '\n';
}

void MeasurementLog::record(const std::vector<NodeValue>& values) {
  for (const auto& v : values) record(v);
  out_.flush();
}

}  // namespace secm2m::energy
