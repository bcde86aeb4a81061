// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>

#include "secm2m/channel.hpp"
#include "secm2m/modbus.hpp"

namespace secm2m::gateway {

/// Sends one ADU through an Open client channel and waits for the response.
/// Channel and transport failures become GatewayUnavailable; a malformed
/// response raises FrameError. Transaction ids travel inside the ADU.
modbus::Adu tunnel_request(SecureChannel& channel, const modbus::Adu& request, std::uint32_t request_id);

/// Near side: accepts plaintext Modbus/TCP clients and opens one secure
/// channel to the far gateway per client connection. Fails closed: on any
/// channel error the client connection is dropped, never answered.
class NearGateway {
 public:
  NearGateway(ChannelConfig channel, Endpoint far, EventLog& events = null_event_log());

  void start(const Endpoint& listen);
  void stop() { tcp_.stop(); }
  Endpoint endpoint() const { return tcp_.endpoint(); }
  std::size_t tunneled() const { return tunneled_.load(); }

  /// Bridges one Modbus client until it disconnects or the channel fails.
  void serve(Transport& client);

 private:
  ChannelConfig channel_;
  Endpoint far_;
  EventLog& events_;
  std::atomic<std::size_t> tunneled_{0};
  TcpServer tcp_;
};

/// Far side: accepts secure channels and forwards each tunneled ADU to the
/// upstream Modbus server over a connection dedicated to that channel.
class FarGateway {
 public:
  FarGateway(ChannelConfig channel, Endpoint upstream, EventLog& events = null_event_log());

  void start(const Endpoint& listen);
  void stop() { tcp_.stop(); }
  Endpoint endpoint() const { return tcp_.endpoint(); }
  std::size_t forwarded() const { return forwarded_.load(); }

  void serve(Transport& near);

 private:
  ChannelConfig channel_;
  Endpoint upstream_;
  EventLog& events_;
  ServerContext context_;
  std::atomic<std::size_t> forwarded_{0};
  TcpServer tcp_;
};

}  // namespace secm2m::gateway
