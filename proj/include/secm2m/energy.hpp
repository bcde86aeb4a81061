// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "secm2m/channel.hpp"
#include "secm2m/config.hpp"

namespace secm2m::energy {

enum class NodeKind : std::uint8_t { VoltageV = 1, CurrentA, ActivePowerKW, SetpointKW, BreakerClosed };
std::string_view to_string(NodeKind kind);
/// Throws InvalidConfig.
NodeKind parse_node_kind(std::string_view text);
bool is_writable(NodeKind kind);

using Value = std::variant<double, bool>;
std::string format_value(const Value& v);

struct NodeValue {
  std::string node_id;
  NodeKind kind = NodeKind::ActivePowerKW;
  Value value = 0.0;
  std::int64_t timestamp_ms = 0;

  bool operator==(const NodeValue&) const = default;
};

inline constexpr double kVoltageMaxV = 500.0;
inline constexpr double kPowerLimitKw = 100.0;

struct DeviceConfig {
  /// Advertised nodes in order. Several ids may expose the same quantity.
  std::vector<std::pair<std::string, NodeKind>> nodes = {{"voltage", NodeKind::VoltageV},
                                                         {"current", NodeKind::CurrentA},
                                                         {"power", NodeKind::ActivePowerKW},
                                                         {"setpoint", NodeKind::SetpointKW},
                                                         {"breaker", NodeKind::BreakerClosed}};
  double alpha = 0.5;
  double setpoint_min_kw = -kPowerLimitKw;
  double setpoint_max_kw = kPowerLimitKw;
  double nominal_voltage_v = 400.0;
  double voltage_noise = 0.01;  // relative, uniform
  std::uint64_t seed = 1;
  std::uint32_t tick_ms = 1000;

  /// Throws InvalidConfig: alpha in (0, 1], envelope inside [-100, 100],
  /// voltage model inside [0, 500], unique non-empty node ids.
  void validate() const;
  /// Keys: alpha, setpoint_min, setpoint_max, nominal_voltage, voltage_noise,
  /// seed, tick_ms, and `node.<id> = <kind>` lines (replacing the defaults).
  static DeviceConfig from(const KeyValueConfig& kv);
};

/// Managed device model: first-order setpoint tracking and a noisy 400 V bus.
/// Not thread-safe; DeviceServer serialises access.
class DeviceState {
 public:
  explicit DeviceState(DeviceConfig config = {}, Clock& clock = SteadyClock::instance());

  /// Throws UnknownNode.
  NodeValue read_node(std::string_view node_id) const;
  /// Returns the node's value after the write.
  /// Throws UnknownNode, ReadOnlyNode, ValidationError.
  NodeValue write_setpoint(std::string_view node_id, const Value& value);
  /// power += alpha * (target - power), target being the setpoint, or 0 while
  /// the breaker is open. Voltage and current are then recomputed.
  void tick();

  std::vector<NodeValue> snapshot() const;
  std::vector<std::string> node_ids() const;

  double power_kw() const { return power_kw_; }
  double setpoint_kw() const { return setpoint_kw_; }
  double voltage_v() const { return voltage_v_; }
  double current_a() const { return current_a_; }
  bool breaker_closed() const { return breaker_closed_; }
  std::uint64_t ticks() const { return ticks_; }
  const DeviceConfig& config() const { return config_; }

 private:
  std::optional<NodeKind> kind_of(std::string_view node_id) const;
  Value value_of(NodeKind kind) const;
  void sample_bus();

  DeviceConfig config_;
  Clock& clock_;
  TimePoint started_;
  SeededRandom noise_;
  double setpoint_kw_ = 0.0;
  double power_kw_ = 0.0;
  double voltage_v_ = 0.0;
  double current_a_ = 0.0;
  bool breaker_closed_ = true;
  std::uint64_t ticks_ = 0;
};

// Application payloads carried inside the secure channel.
//
// request  := op:u8 | id_len:u16 | id | value
// value    := 0x00 (none) | 0x01 f64-be | 0x02 u8
// response := 0x00 | kind:u8 | id_len:u16 | id | value | timestamp_ms:i64-be
//           | 0x01 | code:u32 | msg_len:u16 | msg
enum class Op : std::uint8_t { Read = 1, Write = 2 };

struct Request {
  Op op = Op::Read;
  std::string node_id;
  std::optional<Value> value;

  bool operator==(const Request&) const = default;
};

struct Response {
  std::optional<NodeValue> value;  // set on success
  ErrorCode error = ErrorCode::UnknownNode;
  std::string message;

  bool ok() const { return value.has_value(); }
};

Bytes encode_request(const Request& r);
/// Throws MalformedPayload.
Request decode_request(ByteView b);
Bytes encode_response(const Response& r);
/// Throws MalformedPayload.
Response decode_response(ByteView b);

/// Executes one encoded request. Never throws; failures become error responses.
Bytes handle_request(DeviceState& device, ByteView request);

/// Device endpoint: accepts secure channels and answers requests.
class DeviceServer {
 public:
  using DeliveryHook = std::function<void(const Delivery&)>;

  DeviceServer(DeviceState& device, ChannelConfig channel, EventLog& events = null_event_log(),
               Clock& clock = SteadyClock::instance());
  ~DeviceServer();
  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  /// Called for every payload the channel hands to the application, before
  /// it is executed. Set before start().
  void on_delivered(DeliveryHook hook) { hook_ = std::move(hook); }

  /// Binds `at` and serves each connection on its own thread.
  void start(const Endpoint& at);
  /// Ticks the device every config().tick_ms until stop().
  void start_ticking();
  /// Closes the listener and every connection, then joins all threads.
  void stop();
  Endpoint endpoint() const;

  /// Serves one already-connected transport until the peer closes or fails.
  void serve(Transport& transport);

  std::size_t delivered() const { return delivered_.load(); }
  std::size_t connections() const { return connections_.load(); }
  /// Phases of channels served so far (live or finished), in accept order.
  std::vector<ChannelPhase> channel_phases() const;
  /// Runs `f` with exclusive access to the device.
  void with_device(const std::function<void(DeviceState&)>& f);

 private:
  DeviceState& device_;
  std::mutex device_mutex_;
  ChannelConfig channel_;
  EventLog& events_;
  Clock& clock_;
  ServerContext context_;
  DeliveryHook hook_;

  TcpServer tcp_;
  std::thread ticker_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> delivered_{0};
  std::atomic<std::size_t> connections_{0};

  mutable std::mutex conn_mutex_;
  std::vector<std::shared_ptr<std::atomic<ChannelPhase>>> phases_;
};

/// Controller side: issues requests over an Open client channel.
class Controller {
 public:
  /// `timeout` bounds each call; zero waits forever.
  explicit Controller(SecureChannel& channel, Millis timeout = Millis(5000));

  /// Sends one request and waits for the response carrying the same
  /// request id; unrelated responses are skipped. Throws channel errors,
  /// Timeout, or TransportError when the channel closes.
  Response call(const Request& request);
  NodeValue read(const std::string& node_id);
  NodeValue write(const std::string& node_id, const Value& value);

  std::uint32_t last_request_id() const { return next_request_id_ - 1; }

 private:
  SecureChannel& channel_;
  Transport* transport_ = nullptr;
  std::uint32_t next_request_id_ = 1;
};

/// Reads every node in `node_ids`; throws on the first failed read.
std::vector<NodeValue> controller_poll(Controller& controller, const std::vector<std::string>& node_ids);

/// CSV measurement log: header "timestamp_ms,node_id,value".
class MeasurementLog {
 public:
  explicit MeasurementLog(std::ostream& out);
  void record(const NodeValue& v);
  void record(const std::vector<NodeValue>& values);

 private:
  std::ostream& out_;
};

}  // namespace secm2m::energy
