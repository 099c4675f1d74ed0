#pragma once

#include <cstdint>

#include "dcnsim/topology.hpp"

namespace dcn {

constexpr std::int32_t kMss = 1460;
constexpr std::int32_t kHeaderBytes = 40;
constexpr std::int32_t kWirePacketBytes = kMss + kHeaderBytes;
constexpr std::int32_t kEarWireBytes = 26;

enum PktFlag : std::uint8_t {
  kFlagSyn = 1,
  kFlagAck = 2,
  kFlagFin = 4,
  kFlagElephant = 8,
};

struct FlowKey {
  NodeId src;
  NodeId dst;
  std::uint32_t serial = 0;
  friend bool operator==(const FlowKey& a, const FlowKey& b) {
    return a.src == b.src && a.dst == b.dst && a.serial == b.serial;
  }
};

struct Packet {
  std::uint32_t flow = 0;  // dense per-run flow id
  FlowKey key;
  std::int64_t seq = 0;      // payload byte offset (sender-to-receiver)
  std::int64_t ack_seq = 0;  // cumulative ack (receiver-to-sender)
  std::int32_t payload_len = 0;
  std::int32_t header_len = kHeaderBytes;
  std::uint8_t flags = 0;
  bool to_src = false;  // true for the receiver-to-sender direction
  SimTime enq_time = 0;

  std::int32_t wire_size() const { return header_len + payload_len; }
  bool has(PktFlag f) const { return (flags & f) != 0; }
  NodeId dest_node() const { return to_src ? key.src : key.dst; }
  NodeId origin_node() const { return to_src ? key.dst : key.src; }
};

}  // namespace dcn
