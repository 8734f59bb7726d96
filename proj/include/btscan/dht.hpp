#pragma once

#include <cstdint>
#include <istream>
#include <list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "btscan/bencode.hpp"
#include "btscan/bytes.hpp"
#include "btscan/packet.hpp"
#include "btscan/trackers.hpp"

namespace btscan {

// ---------------------------------------------------------------------------
// Azureus DHT
// ---------------------------------------------------------------------------

// Version-dependent header layout and action codes. The protocol version
// feature thresholds and the valid version range are configurable since the
// on-wire values vary across client generations.
struct AdhtConfig {
  std::uint8_t version_min = 1;
  std::uint8_t version_max = 64;
  std::uint8_t vendor_id_threshold = 13;      // VENDOR_ID byte present at or above
  std::uint8_t networks_threshold = 9;        // NETWORK_ID int present at or above
  std::uint8_t fix_originator_threshold = 24; // LOCAL_PROTOCOL_VERSION byte at or above
  std::uint32_t action_find_node_request = 1024;
  std::uint32_t action_find_node_reply = 1025;
  std::uint32_t action_find_value_request = 1030;
  std::uint32_t action_find_value_reply = 1031;

  bool is_find_request(std::uint32_t action) const {
    return action == action_find_node_request || action == action_find_value_request;
  }
  bool is_find_reply(std::uint32_t action) const {
    return action == action_find_node_reply || action == action_find_value_reply;
  }
};

// Length-tagged address: first byte 4 or 16, address bytes, 16-bit port.
struct AdhtAddress {
  bool is_ipv4 = true;
  Ipv4 ipv4;                 // valid when is_ipv4
  Bytes ipv6;                // 16 raw bytes when !is_ipv4
  std::uint16_t port = 0;
  std::size_t width = 0;     // 7 or 19
};

inline std::optional<AdhtAddress> adht_read_address(BytesView data, std::size_t off) {
  if (off >= data.size()) return std::nullopt;
  std::uint8_t len = data[off];
  if (len != 4 && len != 16) return std::nullopt;
  std::size_t width = 1 + len + 2;
  if (off + width > data.size()) return std::nullopt;
  AdhtAddress addr;
  addr.width = width;
  addr.port = read_u16_be(data, off + 1 + len);
  if (len == 4) {
    addr.is_ipv4 = true;
    addr.ipv4 = Ipv4{read_u32_be(data, off + 1)};
  } else {
    addr.is_ipv4 = false;
    addr.ipv6 = slice(data, off + 1, off + 1 + 16);
  }
  return addr;
}

struct AdhtRequest {
  std::uint64_t connection_id = 0;
  std::uint32_t action = 0;
  std::uint32_t transaction_id = 0;
  std::uint8_t protocol_version = 0;
  AdhtAddress node_address;
  std::uint32_t instance_id = 0;
  std::uint64_t time = 0;
};

// Request header walk: CONNECTION_ID(8) ACTION(4) TRANSACTION_ID(4)
// PROTOCOL_VERSION(1) [VENDOR_ID(1)] [NETWORK_ID(4)] [LOCAL_PROTOCOL_VERSION(1)]
// NODE_ADDRESS INSTANCE_ID(4) TIME(8). A packet qualifies only when the
// connection id has its most significant bit set, the protocol version falls
// in the configured valid range, and the embedded node address echoes the
// packet's UDP source port.
inline std::optional<AdhtRequest> adht_parse_request(const PacketRecord& pkt,
                                                     const AdhtConfig& cfg = {}) {
  if (pkt.proto != Proto::udp) return std::nullopt;
  const Bytes& p = pkt.payload;
  if (p.size() < 17) return std::nullopt;
  AdhtRequest req;
  req.connection_id = read_u64_be(p, 0);
  if ((req.connection_id & 0x8000000000000000ull) == 0) return std::nullopt;
  req.action = read_u32_be(p, 8);
  req.transaction_id = read_u32_be(p, 12);
  req.protocol_version = p[16];
  if (req.protocol_version < cfg.version_min || req.protocol_version > cfg.version_max)
    return std::nullopt;
  std::size_t off = 17;
  if (req.protocol_version >= cfg.vendor_id_threshold) off += 1;
  if (req.protocol_version >= cfg.networks_threshold) off += 4;
  if (req.protocol_version >= cfg.fix_originator_threshold) off += 1;
  auto addr = adht_read_address(p, off);
  if (!addr) return std::nullopt;
  if (addr->port != pkt.src_port) return std::nullopt;  // the port-echo gate
  off += addr->width;
  if (off + 12 > p.size()) return std::nullopt;
  req.node_address = *addr;
  req.instance_id = read_u32_be(p, off);
  req.time = read_u64_be(p, off + 4);
  return req;
}

// Pending find_* requests keyed by transaction id; TTL-expired and
// capacity-bounded (oldest-use eviction). Latest registration wins.
class AdhtTransactionTable {
 public:
  struct Entry {
    Ipv4 requester;
    std::uint32_t action = 0;
    double ts = 0;
  };

  explicit AdhtTransactionTable(double ttl = 60.0, std::size_t capacity = 65536)
      : ttl_(ttl), capacity_(capacity) {}

  void put(std::uint32_t transaction_id, Ipv4 requester, std::uint32_t action, double ts) {
    auto it = entries_.find(transaction_id);
    if (it != entries_.end()) {
      order_.erase(it->second.order_pos);
      entries_.erase(it);
    }
    order_.push_back(transaction_id);
    entries_[transaction_id] = Slot{Entry{requester, action, ts}, std::prev(order_.end())};
    while (entries_.size() > capacity_) {
      auto victim = order_.front();
      order_.pop_front();
      entries_.erase(victim);
    }
  }

  std::optional<Entry> lookup(std::uint32_t transaction_id, double now) const {
    auto it = entries_.find(transaction_id);
    if (it == entries_.end()) return std::nullopt;
    if (now - it->second.entry.ts > ttl_) return std::nullopt;
    return it->second.entry;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  struct Slot {
    Entry entry;
    std::list<std::uint32_t>::iterator order_pos;
  };

  double ttl_;
  std::size_t capacity_;
  std::map<std::uint32_t, Slot> entries_;
  std::list<std::uint32_t> order_;
};

inline void adht_register(const AdhtRequest& req, Ipv4 src, AdhtTransactionTable& table,
                          double ts, const AdhtConfig& cfg = {}) {
  if (!cfg.is_find_request(req.action)) return;
  table.put(req.transaction_id, src, req.action, ts);
}

struct AdhtReplyPeers {
  Ipv4 requester;               // source the peers are credited to
  std::vector<Endpoint> peers;  // IPv4 contacts
  std::size_t ipv6_contacts = 0;  // parsed but never matched (IPv4-only pipeline)
};

// Reply header walk: ACTION(4) TRANSACTION_ID(4) CONNECTION_ID(8)
// PROTOCOL_VERSION(1) [VENDOR_ID(1)] [NETWORK_ID(4)] INSTANCE_ID(4), then the
// contact list: a count byte followed by contacts (type byte, which must be
// UDP = 1, protocol version byte, then a length-tagged address). Replies only
// count when their transaction id matches a live registered request.
inline std::optional<AdhtReplyPeers> adht_parse_reply(const PacketRecord& pkt,
                                                      const AdhtTransactionTable& table,
                                                      double now, const AdhtConfig& cfg = {}) {
  if (pkt.proto != Proto::udp) return std::nullopt;
  const Bytes& p = pkt.payload;
  if (p.size() < 17) return std::nullopt;
  std::uint32_t action = read_u32_be(p, 0);
  if (!cfg.is_find_reply(action)) return std::nullopt;
  std::uint32_t transaction_id = read_u32_be(p, 4);
  auto pending = table.lookup(transaction_id, now);
  if (!pending) return std::nullopt;
  std::uint8_t version = p[16];
  if (version < cfg.version_min || version > cfg.version_max) return std::nullopt;
  std::size_t off = 17;
  if (version >= cfg.vendor_id_threshold) off += 1;
  if (version >= cfg.networks_threshold) off += 4;
  off += 4;  // INSTANCE_ID
  if (off >= p.size()) return std::nullopt;
  std::uint8_t count = p[off];
  ++off;
  AdhtReplyPeers out;
  out.requester = pending->requester;
  for (std::uint8_t i = 0; i < count; ++i) {
    if (off + 2 > p.size()) break;
    std::uint8_t contact_type = p[off];
    auto addr = adht_read_address(p, off + 2);
    if (!addr) break;
    if (contact_type == 1) {  // must be UDP (1); others skipped
      if (addr->is_ipv4)
        out.peers.push_back(Endpoint{addr->ipv4, addr->port});
      else
        ++out.ipv6_contacts;
    }
    off += 2 + addr->width;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mainline DHT
// ---------------------------------------------------------------------------

// "values": list of 6-byte compact peer strings. "nodes": one ByteStr of
// 26-byte entries (20-byte node id + compact address).
inline std::vector<Endpoint> mdht_extract(const PacketRecord& pkt) {
  std::vector<Endpoint> out;
  if (pkt.proto != Proto::udp || pkt.payload.empty()) return out;
  static const Bytes values_marker = to_bytes("6:values");
  static const Bytes nodes_marker = to_bytes("5:nodes");
  if (auto hit = bencode::scan_for_value(pkt.payload, values_marker);
      hit && hit->first.is_list()) {
    for (const auto& entry : hit->first.as_list()) {
      if (!entry.is_bytes() || entry.as_bytes().size() != 6) continue;
      Endpoint ep{Ipv4{read_u32_be(entry.as_bytes(), 0)}, read_u16_be(entry.as_bytes(), 4)};
      if (usable_peer(ep)) out.push_back(ep);
    }
  }
  if (auto hit = bencode::scan_for_value(pkt.payload, nodes_marker);
      hit && hit->first.is_bytes()) {
    const Bytes& blob = hit->first.as_bytes();
    if (blob.size() % 26 == 0) {
      for (std::size_t off = 0; off + 26 <= blob.size(); off += 26) {
        Endpoint ep{Ipv4{read_u32_be(blob, off + 20)}, read_u16_be(blob, off + 24)};
        if (usable_peer(ep)) out.push_back(ep);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Miscellaneous BitTorrent UDP (payload-length + first-bytes signatures)
// ---------------------------------------------------------------------------

enum class LenOp : std::uint8_t { eq, ge, le, gt, lt };

struct Signature {
  std::string name;
  LenOp op = LenOp::eq;
  std::size_t len = 0;
  // one entry per pattern byte; nullopt is a ?? wildcard
  std::vector<std::optional<std::uint8_t>> pattern;

  bool matches(BytesView payload) const {
    switch (op) {
      case LenOp::eq: if (payload.size() != len) return false; break;
      case LenOp::ge: if (payload.size() < len) return false; break;
      case LenOp::le: if (payload.size() > len) return false; break;
      case LenOp::gt: if (payload.size() <= len) return false; break;
      case LenOp::lt: if (payload.size() >= len) return false; break;
    }
    if (pattern.size() > payload.size()) return false;
    for (std::size_t i = 0; i < pattern.size(); ++i)
      if (pattern[i] && *pattern[i] != payload[i]) return false;
    return true;
  }
};

struct SignatureTable {
  std::vector<Signature> signatures;

  const Signature* match(BytesView payload) const {
    for (const auto& sig : signatures)
      if (sig.matches(payload)) return &sig;
    return nullptr;
  }
};

// One signature per line: `<name> len<op><value> <hex with ?? wildcards>`,
// e.g. `mdht-query len==33 64313a61????`. '#' starts a comment.
inline std::optional<Signature> parse_signature_line(const std::string& line,
                                                     std::string* message = nullptr) {
  auto fail = [&](const std::string& m) -> std::optional<Signature> {
    if (message) *message = m;
    return std::nullopt;
  };
  std::istringstream is(line);
  std::string name, lenspec, hex;
  if (!(is >> name >> lenspec >> hex)) return fail("expected: <name> len<op><value> <hex>");
  std::string rest;
  if (is >> rest) return fail("trailing tokens");
  if (lenspec.rfind("len", 0) != 0) return fail("length predicate must start with 'len'");
  std::string_view s(lenspec);
  s.remove_prefix(3);
  Signature sig;
  sig.name = name;
  if (s.rfind("==", 0) == 0) { sig.op = LenOp::eq; s.remove_prefix(2); }
  else if (s.rfind(">=", 0) == 0) { sig.op = LenOp::ge; s.remove_prefix(2); }
  else if (s.rfind("<=", 0) == 0) { sig.op = LenOp::le; s.remove_prefix(2); }
  else if (s.rfind(">", 0) == 0) { sig.op = LenOp::gt; s.remove_prefix(1); }
  else if (s.rfind("<", 0) == 0) { sig.op = LenOp::lt; s.remove_prefix(1); }
  else return fail("unknown length operator");
  if (s.empty()) return fail("missing length value");
  std::size_t len = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return fail("invalid length value");
    len = len * 10 + static_cast<std::size_t>(c - '0');
  }
  sig.len = len;
  if (hex.size() % 2 != 0) return fail("hex pattern has odd length");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    if (hex[i] == '?' && hex[i + 1] == '?') {
      sig.pattern.push_back(std::nullopt);
      continue;
    }
    int hi = nib(hex[i]), lo = nib(hex[i + 1]);
    if (hi < 0 || lo < 0) return fail("invalid hex byte");
    sig.pattern.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  if (sig.pattern.empty()) return fail("empty pattern");
  return sig;
}

struct SignatureLineError {
  std::size_t line = 0;
  std::string message;
};

inline SignatureTable load_signatures(std::istream& in,
                                      std::vector<SignatureLineError>* errors = nullptr) {
  SignatureTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (blank) continue;
    std::string msg;
    auto sig = parse_signature_line(line, &msg);
    if (sig)
      table.signatures.push_back(std::move(*sig));
    else if (errors)
      errors->push_back({lineno, msg});
  }
  return table;
}

// Shipped defaults; user signatures extend or replace them via config file.
inline SignatureTable default_signatures() {
  SignatureTable table;
  auto add = [&](const char* line) {
    auto sig = parse_signature_line(line);
    table.signatures.push_back(std::move(*sig));
  };
  add("mdht-query len>=20 64313a61");     // "d1:a"
  add("mdht-response len>=20 64313a72");  // "d1:r"
  add("utp-syn len==20 41??????");        // uTP ST_SYN, version 1
  return table;
}

// True iff some signature matches; the caller then records (dst_ip, dst_port)
// as a predicted target of src (same port is reused across UDP and TCP).
inline bool btudp_match(const PacketRecord& pkt, const SignatureTable& signatures) {
  if (pkt.proto != Proto::udp) return false;
  return signatures.match(pkt.payload) != nullptr;
}

}  // namespace btscan
