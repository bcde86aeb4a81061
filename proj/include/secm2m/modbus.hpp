// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "secm2m/bytes.hpp"
#include "secm2m/error.hpp"
#include "secm2m/transport.hpp"

namespace secm2m::modbus {

inline constexpr std::size_t kMbapBytes = 7;
inline constexpr std::size_t kMaxPduBytes = 253;
inline constexpr std::uint16_t kDefaultPort = 1502;

/// Modbus/TCP application data unit: MBAP header (big-endian) + PDU.
struct Adu {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  std::uint16_t length = 0;  // unit_id + pdu
  std::uint8_t unit_id = 0;
  Bytes pdu;  // function code + data

  bool operator==(const Adu&) const = default;
};

/// Parses exactly one ADU. Throws FrameError on truncation, protocol_id != 0,
/// a length field disagreeing with the byte count, or an empty/oversized PDU.
Adu parse_mbap(ByteView bytes);

/// Recomputes the length field. Throws PduTooLarge above 253 PDU bytes and
/// FrameError for an empty PDU or protocol_id != 0.
Bytes serialize_mbap(const Adu& adu);

/// Reads one ADU from a stream, validating the header before the body.
/// Returns nullopt on a clean EOF before the first byte.
std::optional<Adu> read_adu(Transport& in);

}  // namespace secm2m::modbus
