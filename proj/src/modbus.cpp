// SPDX-License-Identifier: Apache-2.0
#include "secm2m/modbus.hpp"

#include <array>

namespace secm2m::modbus {

namespace {

struct Header {
  std::uint16_t transaction_id, protocol_id, length;
  std::uint8_t unit_id;
};

Header parse_header(ByteView b) {
  if (b.size() < kMbapBytes) throw Error(ErrorCode::FrameError, "truncated MBAP header");
  Header h{get_u16be(b, 0), get_u16be(b, 2), get_u16be(b, 4), b[6]};
  if (h.protocol_id != 0) throw Error(ErrorCode::FrameError, "protocol id " + std::to_string(h.protocol_id));
  if (h.length < 2 || h.length > kMaxPduBytes + 1)
    throw Error(ErrorCode::FrameError, "length field " + std::to_string(h.length));
  return h;
}

}  // namespace

Adu parse_mbap(ByteView bytes) {
  const Header h = parse_header(bytes);
  if (bytes.size() - 6 != h.length)
    throw Error(ErrorCode::FrameError, "length field " + std::to_string(h.length) + " but " +
                                           std::to_string(bytes.size() - 6) + " bytes follow");
  return Adu{h.transaction_id, h.protocol_id, h.length, h.unit_id, Bytes(bytes.begin() + kMbapBytes, bytes.end())};
}

Bytes serialize_mbap(const Adu& adu) {
  if (adu.pdu.size() > kMaxPduBytes) throw Error(ErrorCode::PduTooLarge, std::to_string(adu.pdu.size()) + " bytes");
  if (adu.pdu.empty()) throw Error(ErrorCode::FrameError, "empty PDU");
  if (adu.protocol_id != 0) throw Error(ErrorCode::FrameError, "protocol id must be 0");
  Bytes out;
  out.reserve(kMbapBytes + adu.pdu.size());
  put_u16be(out, adu.transaction_id);
  put_u16be(out, 0);
  put_u16be(out, static_cast<std::uint16_t>(1 + adu.pdu.size()));
  out.push_back(adu.unit_id);
  append(out, adu.pdu);
  return out;
}

std::optional<Adu> read_adu(Transport& in) {
  std::array<std::uint8_t, kMbapBytes> header{};
  try {
    in.read_exact(std::span(header).first(1));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TransportError) return std::nullopt;
    throw;
  }
  in.read_exact(std::span(header).subspan(1));
  const Header h = parse_header(header);
  Bytes frame(header.begin(), header.end());
  frame.resize(kMbapBytes + h.length - 1);
  in.read_exact(std::span(frame).subspan(kMbapBytes));
  return parse_mbap(frame);
}

}  // namespace secm2m::modbus
