#pragma once

#include <optional>
#include <vector>

#include "btscan/bencode.hpp"
#include "btscan/bytes.hpp"
#include "btscan/packet.hpp"

namespace btscan {

inline bool usable_peer(const Endpoint& ep) {
  return ep.port != 0 && ep.ip.value != 0;
}

// 6-byte compact entries: 4 address bytes + 2 port bytes, big-endian.
inline std::vector<Endpoint> decode_compact_peers(BytesView blob) {
  std::vector<Endpoint> out;
  if (blob.size() % 6 != 0) return out;
  for (std::size_t i = 0; i + 6 <= blob.size(); i += 6)
    out.push_back(Endpoint{Ipv4{read_u32_be(blob, i)}, read_u16_be(blob, i + 4)});
  return out;
}

// Scans a raw TCP payload for a bencoded "peers" value. The payload may carry
// HTTP headers or be mid-stream; no HTTP parsing is attempted. Supports both
// the compact model (ByteStr of 6-byte entries) and the dictionary model
// (list of dicts with "ip" dotted-quad and "port" integer). Peers with port 0
// or address 0.0.0.0 are discarded.
inline std::vector<Endpoint> scan_http_tracker(const PacketRecord& pkt) {
  std::vector<Endpoint> out;
  if (pkt.proto != Proto::tcp || pkt.payload.empty()) return out;
  static const Bytes marker = to_bytes("5:peers");
  auto hit = bencode::scan_for_value(pkt.payload, marker);
  if (!hit) return out;
  const bencode::Value& v = hit->first;
  if (v.is_bytes()) {
    for (const auto& ep : decode_compact_peers(v.as_bytes()))
      if (usable_peer(ep)) out.push_back(ep);
  } else if (v.is_list()) {
    for (const auto& entry : v.as_list()) {
      if (!entry.is_dict()) continue;
      const bencode::Value* ip = entry.find("ip");
      const bencode::Value* port = entry.find("port");
      if (!ip || !port || !ip->is_bytes() || !port->is_integer()) continue;
      auto addr = Ipv4::parse(to_string(ip->as_bytes()));
      std::int64_t p = port->as_integer();
      if (!addr || p < 0 || p > 65535) continue;
      Endpoint ep{*addr, static_cast<std::uint16_t>(p)};
      if (usable_peer(ep)) out.push_back(ep);
    }
  }
  return out;
}

// UDP tracker announce_response: action, transaction_id, interval, leechers,
// seeders at offsets 0, 4, 8, 12, 16, then n 6-byte peer entries.
struct AnnounceResponse {
  std::uint32_t action = 0;
  std::uint32_t transaction_id = 0;
  std::uint32_t interval = 0;
  std::uint32_t leechers = 0;
  std::uint32_t seeders = 0;
  std::vector<Endpoint> peers;
};

constexpr std::uint32_t kUdpTrackerActionAnnounce = 1;

// Matched by length heuristic plus the action gate; the preceding
// connect/announce request is not required.
inline std::optional<AnnounceResponse> parse_udp_tracker(const PacketRecord& pkt) {
  if (pkt.proto != Proto::udp) return std::nullopt;
  const Bytes& p = pkt.payload;
  if (p.size() < 20 || (p.size() - 20) % 6 != 0) return std::nullopt;
  if (read_u32_be(p, 0) != kUdpTrackerActionAnnounce) return std::nullopt;
  AnnounceResponse res;
  res.action = read_u32_be(p, 0);
  res.transaction_id = read_u32_be(p, 4);
  res.interval = read_u32_be(p, 8);
  res.leechers = read_u32_be(p, 12);
  res.seeders = read_u32_be(p, 16);
  for (std::size_t off = 20; off + 6 <= p.size(); off += 6)
    res.peers.push_back(Endpoint{Ipv4{read_u32_be(p, off)}, read_u16_be(p, off + 4)});
  return res;
}

}  // namespace btscan
