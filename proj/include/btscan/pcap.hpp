#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "btscan/bytes.hpp"
#include "btscan/packet.hpp"

namespace btscan {

struct UnsupportedFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Classic pcap only: magic 0xa1b2c3d4 (native) or 0xd4c3b2a1 (swapped),
// Ethernet link layer, IPv4 TCP/UDP. Non-matching frames are skipped.
// A truncated trailing record stops ingestion; `truncated` reports it.
struct PcapReadStats {
  std::size_t frames = 0;    // link-layer frames seen
  std::size_t records = 0;   // PacketRecords produced
  bool truncated = false;
};

namespace pcap_detail {

constexpr std::uint32_t kMagicUsec = 0xa1b2c3d4;
constexpr std::uint32_t kMagicUsecSwapped = 0xd4c3b2a1;
constexpr std::uint16_t kLinkEthernet = 1;
constexpr std::uint16_t kEthertypeIpv4 = 0x0800;

inline std::uint32_t u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t u32_swap(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

// Ethernet + IPv4 + TCP/UDP decode of one captured frame.
inline bool decode_frame(BytesView frame, double ts, PacketRecord& out) {
  if (frame.size() < 14) return false;
  std::uint16_t ethertype = read_u16_be(frame, 12);
  if (ethertype != kEthertypeIpv4) return false;
  std::size_t ip_off = 14;
  if (frame.size() < ip_off + 20) return false;
  std::uint8_t vhl = frame[ip_off];
  if ((vhl >> 4) != 4) return false;
  std::size_t ihl = static_cast<std::size_t>(vhl & 0x0f) * 4;
  if (ihl < 20 || frame.size() < ip_off + ihl) return false;
  std::uint16_t total_len = read_u16_be(frame, ip_off + 2);
  if (total_len < ihl) return false;
  std::size_t ip_end = ip_off + total_len;
  if (ip_end > frame.size()) ip_end = frame.size();  // tolerate short snaplen
  std::uint8_t proto = frame[ip_off + 9];
  Ipv4 src{read_u32_be(frame, ip_off + 12)};
  Ipv4 dst{read_u32_be(frame, ip_off + 16)};
  std::size_t l4_off = ip_off + ihl;

  if (proto == 6) {  // TCP
    if (ip_end < l4_off + 20) return false;
    std::uint16_t sport = read_u16_be(frame, l4_off);
    std::uint16_t dport = read_u16_be(frame, l4_off + 2);
    std::size_t data_off = static_cast<std::size_t>(frame[l4_off + 12] >> 4) * 4;
    if (data_off < 20 || l4_off + data_off > ip_end) return false;
    std::uint8_t flags = frame[l4_off + 13];
    out.ts = ts;
    out.src_ip = src;
    out.src_port = sport;
    out.dst_ip = dst;
    out.dst_port = dport;
    out.proto = Proto::tcp;
    out.tcp_flags = TcpFlags{.syn = (flags & 0x02) != 0,
                             .ack = (flags & 0x10) != 0,
                             .rst = (flags & 0x04) != 0,
                             .fin = (flags & 0x01) != 0};
    out.payload = slice(frame, l4_off + data_off, ip_end);
    return true;
  }
  if (proto == 17) {  // UDP
    if (ip_end < l4_off + 8) return false;
    out.ts = ts;
    out.src_ip = src;
    out.src_port = read_u16_be(frame, l4_off);
    out.dst_ip = dst;
    out.dst_port = read_u16_be(frame, l4_off + 2);
    out.proto = Proto::udp;
    out.tcp_flags = TcpFlags{};
    out.payload = slice(frame, l4_off + 8, ip_end);
    return true;
  }
  return false;
}

}  // namespace pcap_detail

inline PcapReadStats read_pcap(std::istream& in, const std::function<void(PacketRecord)>& sink) {
  using namespace pcap_detail;
  PcapReadStats stats;
  std::uint8_t hdr[24];
  in.read(reinterpret_cast<char*>(hdr), 24);
  if (in.gcount() != 24) throw UnsupportedFormatError("pcap: short global header");
  std::uint32_t magic = u32_le(hdr);
  bool swapped;
  if (magic == kMagicUsec)
    swapped = false;
  else if (magic == kMagicUsecSwapped)
    swapped = true;
  else
    throw UnsupportedFormatError("pcap: unrecognized magic");
  auto field = [&](const std::uint8_t* p) {
    std::uint32_t v = u32_le(p);
    return swapped ? u32_swap(v) : v;
  };
  std::uint32_t linktype = field(hdr + 20);
  if (linktype != kLinkEthernet)
    throw UnsupportedFormatError("pcap: unsupported link type " + std::to_string(linktype));

  std::uint8_t rec[16];
  Bytes frame;
  while (true) {
    in.read(reinterpret_cast<char*>(rec), 16);
    if (in.gcount() == 0) break;
    if (in.gcount() != 16) {
      stats.truncated = true;
      break;
    }
    std::uint32_t ts_sec = field(rec);
    std::uint32_t ts_usec = field(rec + 4);
    std::uint32_t incl_len = field(rec + 8);
    if (incl_len > (1u << 26)) {  // implausible record, treat as corruption
      stats.truncated = true;
      break;
    }
    frame.resize(incl_len);
    in.read(reinterpret_cast<char*>(frame.data()), incl_len);
    if (static_cast<std::uint32_t>(in.gcount()) != incl_len) {
      stats.truncated = true;
      break;
    }
    ++stats.frames;
    PacketRecord pr;
    if (decode_frame(frame, ts_sec + ts_usec * 1e-6, pr)) {
      ++stats.records;
      sink(std::move(pr));
    }
  }
  return stats;
}

inline std::vector<PacketRecord> read_pcap(std::istream& in, PcapReadStats* stats = nullptr) {
  std::vector<PacketRecord> out;
  PcapReadStats s = read_pcap(in, [&](PacketRecord pr) { out.push_back(std::move(pr)); });
  if (stats) *stats = s;
  return out;
}

// --- pcap writing (used by the synthetic generator) ---

inline void write_pcap_header(std::ostream& out) {
  Bytes hdr;
  auto le32 = [&](std::uint32_t v) {
    hdr.push_back(v & 0xff);
    hdr.push_back(v >> 8 & 0xff);
    hdr.push_back(v >> 16 & 0xff);
    hdr.push_back(v >> 24 & 0xff);
  };
  le32(pcap_detail::kMagicUsec);
  hdr.push_back(2);
  hdr.push_back(0);  // version 2.4
  hdr.push_back(4);
  hdr.push_back(0);
  le32(0);      // thiszone
  le32(0);      // sigfigs
  le32(65535);  // snaplen
  le32(pcap_detail::kLinkEthernet);
  out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
}

inline void write_pcap_record(std::ostream& out, const PacketRecord& pr) {
  Bytes frame;
  // Ethernet header with locally administered MACs derived from the IPs.
  for (int i = 0; i < 2; ++i) {
    std::uint32_t ip = i == 0 ? pr.dst_ip.value : pr.src_ip.value;
    frame.push_back(0x02);
    frame.push_back(0x00);
    frame.push_back(ip >> 24 & 0xff);
    frame.push_back(ip >> 16 & 0xff);
    frame.push_back(ip >> 8 & 0xff);
    frame.push_back(ip & 0xff);
  }
  append_u16_be(frame, pcap_detail::kEthertypeIpv4);

  std::size_t l4_len = (pr.proto == Proto::tcp ? 20 : 8) + pr.payload.size();
  std::size_t ip_total = 20 + l4_len;
  frame.push_back(0x45);  // IPv4, IHL 5
  frame.push_back(0);
  append_u16_be(frame, static_cast<std::uint16_t>(ip_total));
  append_u16_be(frame, 0);  // id
  append_u16_be(frame, 0x4000);  // don't fragment
  frame.push_back(64);  // ttl
  frame.push_back(pr.proto == Proto::tcp ? 6 : 17);
  append_u16_be(frame, 0);  // checksum unset; readers here do not verify
  append_u32_be(frame, pr.src_ip.value);
  append_u32_be(frame, pr.dst_ip.value);

  if (pr.proto == Proto::tcp) {
    append_u16_be(frame, pr.src_port);
    append_u16_be(frame, pr.dst_port);
    append_u32_be(frame, 0);  // seq
    append_u32_be(frame, 0);  // ack
    frame.push_back(5 << 4);  // data offset 5
    std::uint8_t flags = 0;
    if (pr.tcp_flags.fin) flags |= 0x01;
    if (pr.tcp_flags.syn) flags |= 0x02;
    if (pr.tcp_flags.rst) flags |= 0x04;
    if (pr.tcp_flags.ack) flags |= 0x10;
    frame.push_back(flags);
    append_u16_be(frame, 65535);  // window
    append_u16_be(frame, 0);      // checksum
    append_u16_be(frame, 0);      // urgent
  } else {
    append_u16_be(frame, pr.src_port);
    append_u16_be(frame, pr.dst_port);
    append_u16_be(frame, static_cast<std::uint16_t>(8 + pr.payload.size()));
    append_u16_be(frame, 0);  // checksum
  }
  frame.insert(frame.end(), pr.payload.begin(), pr.payload.end());

  Bytes rec;
  auto le32 = [&](std::uint32_t v) {
    rec.push_back(v & 0xff);
    rec.push_back(v >> 8 & 0xff);
    rec.push_back(v >> 16 & 0xff);
    rec.push_back(v >> 24 & 0xff);
  };
  auto ts_sec = static_cast<std::uint32_t>(pr.ts);
  auto ts_usec = static_cast<std::uint32_t>((pr.ts - ts_sec) * 1e6 + 0.5);
  if (ts_usec >= 1000000) {
    ts_sec += 1;
    ts_usec -= 1000000;
  }
  le32(ts_sec);
  le32(ts_usec);
  le32(static_cast<std::uint32_t>(frame.size()));
  le32(static_cast<std::uint32_t>(frame.size()));
  out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  out.write(reinterpret_cast<const char*>(frame.data()),
            static_cast<std::streamsize>(frame.size()));
}

}  // namespace btscan
