#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "btscan/bencode.hpp"
#include "btscan/bytes.hpp"
#include "btscan/packet.hpp"

namespace btscan {

enum class HostKind : std::uint8_t {
  horizontal_scanner,
  vertical_scanner,
  hybrid_scanner,
  bittorrent,
  infrastructure,  // trackers/DHT nodes/gossip peers answering a generated host
};

inline const char* host_kind_name(HostKind k) {
  switch (k) {
    case HostKind::horizontal_scanner: return "horizontal_scanner";
    case HostKind::vertical_scanner: return "vertical_scanner";
    case HostKind::hybrid_scanner: return "hybrid_scanner";
    case HostKind::bittorrent: return "bittorrent";
    case HostKind::infrastructure: return "infrastructure";
  }
  return "?";
}

inline std::optional<HostKind> parse_host_kind(std::string_view s) {
  for (HostKind k : {HostKind::horizontal_scanner, HostKind::vertical_scanner,
                     HostKind::hybrid_scanner, HostKind::bittorrent, HostKind::infrastructure})
    if (s == host_kind_name(k)) return k;
  return std::nullopt;
}

enum class CoordKind : std::uint8_t { http, udp_tracker, mdht, adht, pex };

struct HostProfile {
  HostKind kind = HostKind::bittorrent;
  double rate = 1.0;  // connection attempts per second
  std::uint64_t seed = 0;

  // scanner params
  std::size_t target_count = 256;  // horizontal / hybrid
  std::size_t port_count = 256;    // vertical / hybrid
  std::uint16_t base_port = 445;
  double noreply_fraction = 0.95;  // rest get a RST

  // bittorrent params
  std::size_t peer_count = 150;
  double unconnectable_fraction = 0.8;
  std::vector<CoordKind> coordination_mix = {CoordKind::http, CoordKind::udp_tracker,
                                             CoordKind::mdht, CoordKind::adht, CoordKind::pex};

  // address plan (filled by assemble_experiment for stock populations)
  Ipv4 source_ip;
  std::uint32_t target_base = 0;  // scan targets / peer addresses carved from here
  std::uint32_t infra_base = 0;   // trackers, DHT nodes, gossip peers
};

struct LabeledTrace {
  std::vector<PacketRecord> packets;
  std::map<std::uint32_t, HostKind> labels;  // every source ip appearing in packets
};

namespace synth_detail {

// splitmix64 step; decorrelates per-host streams derived from one seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ull + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Bytes compact_blob(const std::vector<Endpoint>& peers) {
  Bytes blob;
  for (const auto& ep : peers) {
    append_u32_be(blob, ep.ip.value);
    append_u16_be(blob, ep.port);
  }
  return blob;
}

inline PacketRecord tcp_data(double ts, Ipv4 src, std::uint16_t sport, Ipv4 dst,
                             std::uint16_t dport, Bytes payload) {
  return PacketRecord{ts,    src,  sport, dst, dport, Proto::tcp,
                      TcpFlags{.ack = true}, std::move(payload)};
}

inline PacketRecord udp_pkt(double ts, Ipv4 src, std::uint16_t sport, Ipv4 dst,
                            std::uint16_t dport, Bytes payload) {
  return PacketRecord{ts, src, sport, dst, dport, Proto::udp, TcpFlags{}, std::move(payload)};
}

inline Bytes http_tracker_payload(const std::vector<Endpoint>& peers, bool dict_model) {
  using namespace bencode;
  Value peers_value = Value::bytes(compact_blob(peers));
  if (dict_model) {
    ValueList list;
    for (const auto& ep : peers) {
      DictEntries entry;
      entry.emplace_back(to_bytes("ip"), Value::str(ep.ip.str()));
      entry.emplace_back(to_bytes("port"), Value::integer(ep.port));
      list.push_back(Value::dict(std::move(entry)));
    }
    peers_value = Value::list(std::move(list));
  }
  DictEntries body;
  body.emplace_back(to_bytes("interval"), Value::integer(1800));
  body.emplace_back(to_bytes("peers"), std::move(peers_value));
  Bytes out = to_bytes("HTTP/1.0 200 OK\r\nContent-Type: text/plain\r\n\r\n");
  Bytes enc = encode(Value::dict(std::move(body)));
  out.insert(out.end(), enc.begin(), enc.end());
  return out;
}

inline Bytes udp_tracker_payload(std::uint32_t transaction_id,
                                 const std::vector<Endpoint>& peers) {
  Bytes out;
  append_u32_be(out, 1);  // action: announce
  append_u32_be(out, transaction_id);
  append_u32_be(out, 1800);  // interval
  append_u32_be(out, static_cast<std::uint32_t>(peers.size() / 2));  // leechers
  append_u32_be(out, static_cast<std::uint32_t>(peers.size() - peers.size() / 2));  // seeders
  Bytes blob = compact_blob(peers);
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

inline Bytes mdht_query_payload() {
  using namespace bencode;
  DictEntries top;
  top.emplace_back(to_bytes("t"), Value::str("aa"));
  top.emplace_back(to_bytes("y"), Value::str("q"));
  return encode(Value::dict(std::move(top)));  // "d1:t2:aa1:y1:qe"
}

inline Bytes mdht_response_payload(const std::vector<Endpoint>& peers, bool nodes_model,
                                   std::mt19937_64& rng) {
  using namespace bencode;
  Bytes node_id(20);
  for (auto& b : node_id) b = static_cast<std::uint8_t>(rng() & 0xff);
  DictEntries reply;
  reply.emplace_back(to_bytes("id"), Value::bytes(node_id));
  if (nodes_model) {
    Bytes blob;
    for (const auto& ep : peers) {
      for (int i = 0; i < 20; ++i) blob.push_back(static_cast<std::uint8_t>(rng() & 0xff));
      append_u32_be(blob, ep.ip.value);
      append_u16_be(blob, ep.port);
    }
    reply.emplace_back(to_bytes("nodes"), Value::bytes(std::move(blob)));
  } else {
    ValueList values;
    for (const auto& ep : peers)
      values.push_back(Value::bytes(compact_blob({ep})));
    reply.emplace_back(to_bytes("values"), Value::list(std::move(values)));
  }
  DictEntries top;
  top.emplace_back(to_bytes("r"), Value::dict(std::move(reply)));
  top.emplace_back(to_bytes("t"), Value::str("aa"));
  top.emplace_back(to_bytes("y"), Value::str("r"));
  return encode(Value::dict(std::move(top)));  // starts "d1:r..."
}

inline void append_adht_address(Bytes& out, Ipv4 ip, std::uint16_t port) {
  out.push_back(4);
  append_u32_be(out, ip.value);
  append_u16_be(out, port);
}

inline Bytes adht_request_payload(std::uint8_t version, std::uint32_t action,
                                  std::uint32_t transaction_id, Ipv4 node_ip,
                                  std::uint16_t node_port, std::mt19937_64& rng) {
  Bytes out;
  append_u64_be(out, rng() | 0x8000000000000000ull);  // CONNECTION_ID, MSB set
  append_u32_be(out, action);
  append_u32_be(out, transaction_id);
  out.push_back(version);
  if (version >= 13) out.push_back(0);                            // VENDOR_ID: Azureus
  if (version >= 9) append_u32_be(out, 0);                        // NETWORK_ID: stable
  if (version >= 24) out.push_back(version);                      // LOCAL_PROTOCOL_VERSION
  append_adht_address(out, node_ip, node_port);                   // NODE_ADDRESS
  append_u32_be(out, static_cast<std::uint32_t>(rng() & 0xffffffffu));  // INSTANCE_ID
  append_u64_be(out, 1600000000000ull);                           // TIME (ms since epoch)
  return out;
}

inline Bytes adht_reply_payload(std::uint8_t version, std::uint32_t action,
                                std::uint32_t transaction_id,
                                const std::vector<Endpoint>& contacts, std::mt19937_64& rng) {
  Bytes out;
  append_u32_be(out, action);
  append_u32_be(out, transaction_id);
  append_u64_be(out, rng() | 0x8000000000000000ull);  // CONNECTION_ID echo
  out.push_back(version);
  if (version >= 13) out.push_back(0);
  if (version >= 9) append_u32_be(out, 0);
  append_u32_be(out, static_cast<std::uint32_t>(rng() & 0xffffffffu));  // INSTANCE_ID
  out.push_back(static_cast<std::uint8_t>(contacts.size()));
  for (const auto& ep : contacts) {
    out.push_back(1);        // contact type: UDP
    out.push_back(version);  // contact protocol version
    append_adht_address(out, ep.ip, ep.port);
  }
  return out;
}

inline Bytes pex_payload(const std::vector<Endpoint>& peers) {
  using namespace bencode;
  DictEntries top;
  top.emplace_back(to_bytes("added"), Value::bytes(compact_blob(peers)));
  top.emplace_back(to_bytes("added.f"), Value::bytes(Bytes(peers.size(), 0)));
  return encode(Value::dict(std::move(top)));
}

}  // namespace synth_detail

// Scanner stream: SYN probes at the profile rate; a noreply_fraction subset
// stays unanswered, the rest are RST by the responder. No coordination
// payloads ever appear in a scanner stream.
inline std::vector<PacketRecord> gen_scanner(const HostProfile& profile, double start) {
  using namespace synth_detail;
  std::vector<PacketRecord> out;
  std::mt19937_64 rng(mix_seed(profile.seed, 0x5ca11));
  std::size_t probes = 0;
  switch (profile.kind) {
    case HostKind::horizontal_scanner: probes = profile.target_count; break;
    case HostKind::vertical_scanner: probes = profile.port_count; break;
    case HostKind::hybrid_scanner: probes = profile.target_count * profile.port_count; break;
    default: throw std::invalid_argument("gen_scanner: not a scanner profile");
  }
  for (std::size_t j = 0; j < probes; ++j) {
    Ipv4 target;
    std::uint16_t port;
    switch (profile.kind) {
      case HostKind::horizontal_scanner:
        target = Ipv4{profile.target_base + 1 + static_cast<std::uint32_t>(j)};
        port = profile.base_port;
        break;
      case HostKind::vertical_scanner:
        target = Ipv4{profile.target_base + 1};
        port = static_cast<std::uint16_t>(profile.base_port + j);
        break;
      default:  // hybrid: sweep all ports on one address, then the next address
        target = Ipv4{profile.target_base + 1 +
                      static_cast<std::uint32_t>(j / profile.port_count)};
        port = static_cast<std::uint16_t>(profile.base_port + j % profile.port_count);
        break;
    }
    double t = start + static_cast<double>(j) / profile.rate;
    auto sport = static_cast<std::uint16_t>(32768 + j % 28000);
    out.push_back(PacketRecord{t, profile.source_ip, sport, target, port, Proto::tcp,
                               TcpFlags{.syn = true}, {}});
    bool answered = (rng() % 10000) >= static_cast<std::uint64_t>(profile.noreply_fraction * 10000);
    if (answered)
      out.push_back(PacketRecord{t + 0.05, target, port, profile.source_ip, sport, Proto::tcp,
                                 TcpFlags{.ack = true, .rst = true}, {}});
  }
  return out;
}

// BitTorrent host stream: coordination messages listing k peers come first,
// then TCP SYNs to exactly those peers. A ceil(u*k) subset is unconnectable
// (answered by RST); the rest complete handshakes.
inline std::vector<PacketRecord> gen_bittorrent_host(const HostProfile& profile, double start) {
  using namespace synth_detail;
  if (profile.kind != HostKind::bittorrent)
    throw std::invalid_argument("gen_bittorrent_host: not a bittorrent profile");
  if (profile.coordination_mix.empty())
    throw std::invalid_argument("gen_bittorrent_host: empty coordination mix");
  std::vector<PacketRecord> out;
  std::mt19937_64 rng(mix_seed(profile.seed, 0xb17));
  Ipv4 host = profile.source_ip;

  // peers live in this host's block on distinct, mostly unique ports
  std::vector<Endpoint> peers;
  peers.reserve(profile.peer_count);
  for (std::size_t j = 0; j < profile.peer_count; ++j) {
    auto port = static_cast<std::uint16_t>(1025 + rng() % 64510);
    peers.push_back(Endpoint{Ipv4{profile.target_base + 1 + static_cast<std::uint32_t>(j)}, port});
  }

  // split the peer list round-robin across the coordination mix
  std::vector<std::vector<Endpoint>> shares(profile.coordination_mix.size());
  for (std::size_t j = 0; j < peers.size(); ++j)
    shares[j % shares.size()].push_back(peers[j]);

  double t = start;
  constexpr std::size_t kChunk = 50;
  for (std::size_t m = 0; m < profile.coordination_mix.size(); ++m) {
    CoordKind kind = profile.coordination_mix[m];
    Ipv4 infra{profile.infra_base + 1 + static_cast<std::uint32_t>(m)};
    const auto& share = shares[m];
    for (std::size_t off = 0; off < share.size() || off == 0; off += kChunk) {
      std::vector<Endpoint> chunk(share.begin() + static_cast<std::ptrdiff_t>(
                                      std::min(off, share.size())),
                                  share.begin() + static_cast<std::ptrdiff_t>(
                                      std::min(off + kChunk, share.size())));
      if (chunk.empty() && off > 0) break;
      auto sport = static_cast<std::uint16_t>(20000 + rng() % 20000);
      switch (kind) {
        case CoordKind::http:
          out.push_back(tcp_data(t, host, sport, infra, 80, to_bytes("GET /announce HTTP/1.0\r\n\r\n")));
          out.push_back(tcp_data(t + 0.05, infra, 80, host, sport,
                                 http_tracker_payload(chunk, rng() % 2 == 0)));
          break;
        case CoordKind::udp_tracker: {
          auto txid = static_cast<std::uint32_t>(rng() & 0xffffffffu);
          out.push_back(udp_pkt(t, host, sport, infra, 6969, Bytes(16, 0)));
          out.push_back(udp_pkt(t + 0.05, infra, 6969, host, sport,
                                udp_tracker_payload(txid, chunk)));
          break;
        }
        case CoordKind::mdht:
          out.push_back(udp_pkt(t, host, sport, infra, 6881, mdht_query_payload()));
          out.push_back(udp_pkt(t + 0.05, infra, 6881, host, sport,
                                mdht_response_payload(chunk, rng() % 2 == 0, rng)));
          break;
        case CoordKind::adht: {
          // alternate across the version feature regimes
          std::uint8_t version = std::array<std::uint8_t, 3>{5, 10, 30}[rng() % 3];
          auto txid = static_cast<std::uint32_t>(rng() & 0xffffffffu);
          out.push_back(udp_pkt(t, host, sport, infra, 6881,
                                adht_request_payload(version, 1030, txid, host, sport, rng)));
          out.push_back(udp_pkt(t + 0.05, infra, 6881, host, sport,
                                adht_reply_payload(version, 1031, txid, chunk, rng)));
          break;
        }
        case CoordKind::pex:
          // gossip from an already-connected peer; both ends learn the batch
          out.push_back(tcp_data(t, infra, 51413, host, sport, pex_payload(chunk)));
          break;
      }
      t += 0.2;
      if (share.empty()) break;
    }
  }

  // connection attempts to exactly the advertised peers
  std::vector<std::size_t> order(peers.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::shuffle(order.begin(), order.end(), rng);
  auto unconnectable = static_cast<std::size_t>(
      std::ceil(profile.unconnectable_fraction * static_cast<double>(peers.size())));
  std::vector<bool> fails(peers.size(), false);
  for (std::size_t j = 0; j < unconnectable && j < order.size(); ++j) fails[order[j]] = true;

  double t0 = t + 1.0;
  for (std::size_t j = 0; j < peers.size(); ++j) {
    double at = t0 + static_cast<double>(j) / profile.rate;
    auto sport = static_cast<std::uint16_t>(20000 + (rng() % 40000));
    const Endpoint& ep = peers[j];
    out.push_back(PacketRecord{at, host, sport, ep.ip, ep.port, Proto::tcp,
                               TcpFlags{.syn = true}, {}});
    if (fails[j]) {
      // active refusal; keeps the failure's timestamp next to the attempt so
      // the detector's flag instant never predates the attempts that led to it
      out.push_back(PacketRecord{at + 0.05, ep.ip, ep.port, host, sport, Proto::tcp,
                                 TcpFlags{.ack = true, .rst = true}, {}});
    } else {
      out.push_back(PacketRecord{at + 0.02, ep.ip, ep.port, host, sport, Proto::tcp,
                                 TcpFlags{.syn = true, .ack = true}, {}});
      out.push_back(PacketRecord{at + 0.04, host, sport, ep.ip, ep.port, Proto::tcp,
                                 TcpFlags{.ack = true}, {}});
    }
  }
  return out;
}

// Default rate ladder spanning the controlled experiment's stated range.
inline const std::vector<double>& default_scan_rates() {
  static const std::vector<double> rates = {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  return rates;
}

struct ExperimentConfig {
  std::size_t scanner_count = 51;
  std::size_t bt_host_count = 49;
  std::uint64_t seed = 20120901;
  std::size_t bt_peer_count = 150;
  double bt_rate = 2.0;
  double bt_unconnectable = 0.8;
};

// Scanners and BitTorrent hosts from disjoint address blocks, all streams
// starting at t = 0, merged by timestamp. Deterministic for a fixed seed.
inline LabeledTrace assemble_experiment(const std::vector<HostProfile>& scanners,
                                        const std::vector<HostProfile>& bt_hosts) {
  LabeledTrace trace;
  for (const auto& profile : scanners) {
    auto packets = gen_scanner(profile, 0.0);
    trace.labels[profile.source_ip.value] = profile.kind;
    for (auto& pkt : packets) {
      trace.labels.emplace(pkt.src_ip.value, HostKind::infrastructure);
      trace.packets.push_back(std::move(pkt));
    }
  }
  for (const auto& profile : bt_hosts) {
    auto packets = gen_bittorrent_host(profile, 0.0);
    trace.labels[profile.source_ip.value] = profile.kind;
    for (auto& pkt : packets) {
      trace.labels.emplace(pkt.src_ip.value, HostKind::infrastructure);
      trace.packets.push_back(std::move(pkt));
    }
  }
  std::stable_sort(trace.packets.begin(), trace.packets.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
  return trace;
}

// Stock populations mirroring the controlled experiment: geometries cycle
// across the scanners, rates cycle over the default ladder, address blocks
// are disjoint per host.
inline LabeledTrace default_experiment(const ExperimentConfig& cfg = {}) {
  using namespace synth_detail;
  if (cfg.scanner_count > 1024 || cfg.bt_host_count > 1024)
    throw std::invalid_argument("address block exhaustion: at most 1024 hosts per class");
  std::vector<HostProfile> scanners;
  for (std::size_t i = 0; i < cfg.scanner_count; ++i) {
    HostProfile p;
    switch (i % 3) {
      case 0:
        p.kind = HostKind::horizontal_scanner;
        p.target_count = 256;
        p.base_port = 445;
        break;
      case 1:
        p.kind = HostKind::vertical_scanner;
        p.port_count = 256;
        p.base_port = 1;
        break;
      default:
        p.kind = HostKind::hybrid_scanner;
        p.target_count = 32;
        p.port_count = 64;
        p.base_port = 1000;
        break;
    }
    p.rate = default_scan_rates()[i % default_scan_rates().size()];
    p.seed = mix_seed(cfg.seed, 1000 + i);
    p.source_ip = Ipv4{0x0A010000u + 1 + static_cast<std::uint32_t>(i)};       // 10.1.0.0/16
    p.target_base = 0x64400000u + static_cast<std::uint32_t>(i) * 0x10000u;    // 100.64.0.0/10
    scanners.push_back(p);
  }
  std::vector<HostProfile> bt_hosts;
  for (std::size_t i = 0; i < cfg.bt_host_count; ++i) {
    HostProfile p;
    p.kind = HostKind::bittorrent;
    p.rate = cfg.bt_rate;
    p.seed = mix_seed(cfg.seed, 2000 + i);
    p.peer_count = cfg.bt_peer_count;
    p.unconnectable_fraction = cfg.bt_unconnectable;
    p.source_ip = Ipv4{0x0A020000u + 1 + static_cast<std::uint32_t>(i)};       // 10.2.0.0/16
    p.target_base = 0x33000000u + static_cast<std::uint32_t>(i) * 0x10000u;    // 51.0.0.0/8
    p.infra_base = 0xCB000000u + static_cast<std::uint32_t>(i) * 0x100u;       // 203.0.0.0/8
    bt_hosts.push_back(p);
  }
  return assemble_experiment(scanners, bt_hosts);
}

}  // namespace btscan
