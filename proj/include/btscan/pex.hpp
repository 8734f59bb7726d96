#pragma once

#include <vector>

#include "btscan/bencode.hpp"
#include "btscan/packet.hpp"
#include "btscan/trackers.hpp"

namespace btscan {

// uTorrent PEX: scans a TCP payload for the "added" compact peer list.
// "dropped" lists never create predictions; "added.f" flags (key "7:added.f")
// do not collide with the "5:added" marker and are skipped naturally.
inline std::vector<Endpoint> scan_utpex(const PacketRecord& pkt) {
  std::vector<Endpoint> out;
  if (pkt.proto != Proto::tcp || pkt.payload.empty()) return out;
  static const Bytes marker = to_bytes("5:added");
  auto hit = bencode::scan_for_value(pkt.payload, marker);
  if (!hit || !hit->first.is_bytes()) return out;
  for (const auto& ep : decode_compact_peers(hit->first.as_bytes()))
    if (usable_peer(ep)) out.push_back(ep);
  return out;
}

}  // namespace btscan
