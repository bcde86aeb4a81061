// SPDX-License-Identifier: Apache-2.0
#include "secm2m/gateway.hpp"

namespace secm2m::gateway {

using modbus::Adu;

modbus::Adu tunnel_request(SecureChannel& channel, const Adu& request, std::uint32_t request_id) {
  std::optional<Delivery> reply;
  try {
    channel.send(request_id, modbus::serialize_mbap(request));
    do {
      reply = channel.receive();
      if (!reply) throw Error(ErrorCode::GatewayUnavailable, "far gateway closed the channel");
    } while (reply->request_id != request_id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GatewayUnavailable || e.code() == ErrorCode::PduTooLarge ||
        e.code() == ErrorCode::FrameError)
      throw;
    throw Error(ErrorCode::GatewayUnavailable, e.what());
  }
  Adu response = modbus::parse_mbap(reply->payload);
  if (response.transaction_id != request.transaction_id)
    throw Error(ErrorCode::FrameError, "response for another transaction");
  return response;
}

NearGateway::NearGateway(ChannelConfig channel, Endpoint far, EventLog& events)
    : channel_(std::move(channel)), far_(std::move(far)), events_(events), tcp_([this](TcpStream& s) { serve(s); }) {
  channel_.validate();
}

void NearGateway::start(const Endpoint& listen) { tcp_.start(listen); }

void NearGateway::serve(Transport& client) {
  std::unique_ptr<TcpStream> link;
  std::unique_ptr<SecureChannel> channel;
  try {
    link = TcpStream::connect(far_);
    link->set_read_timeout(Millis(channel_.handshake_timeout_ms));
    channel = std::make_unique<SecureChannel>(channel_, *link, SteadyClock::instance(), events_);
    channel->open();
    link->set_read_timeout(Millis(0));
  } catch (const Error& e) {
    events_.emit("gateway_unavailable", {{"error", e.what()}});
    client.close();
    return;
  }
  std::uint32_t request_id = 0;
  try {
    while (auto request = modbus::read_adu(client)) {
      const Adu response = tunnel_request(*channel, *request, ++request_id);
      client.write_all(modbus::serialize_mbap(response));
      ++tunneled_;
    }
    channel->close();
  } catch (const Error& e) {
    events_.emit("gateway_closed", {{"side", "near"}, {"error", e.what()}});
    if (e.code() == ErrorCode::FrameError) channel->close();
  }
  client.close();
  link->close();
}

FarGateway::FarGateway(ChannelConfig channel, Endpoint upstream, EventLog& events)
    : channel_(std::move(channel)),
      upstream_(std::move(upstream)),
      events_(events),
      tcp_([this](TcpStream& s) { serve(s); }) {
  channel_.validate();
}

void FarGateway::start(const Endpoint& listen) { tcp_.start(listen); }

void FarGateway::serve(Transport& near) {
  SecureChannel channel(channel_, near, SteadyClock::instance(), events_);
  std::unique_ptr<TcpStream> server;
  try {
    near.set_read_timeout(Millis(channel_.handshake_timeout_ms));
    channel.accept(context_);
    near.set_read_timeout(Millis(0));
    server = TcpStream::connect(upstream_);
    while (auto delivery = channel.receive()) {
      const Adu request = modbus::parse_mbap(delivery->payload);
      server->write_all(modbus::serialize_mbap(request));
      const auto response = modbus::read_adu(*server);
      if (!response) throw Error(ErrorCode::GatewayUnavailable, "Modbus server closed the connection");
      channel.send(delivery->request_id, modbus::serialize_mbap(*response));
      ++forwarded_;
    }
  } catch (const Error& e) {
    events_.emit("gateway_closed", {{"side", "far"}, {"error", e.what()}});
    if (channel.phase() == ChannelPhase::Open) channel.close();
  }
  if (server) server->close();
  near.close();
}

}  // namespace secm2m::gateway
