#pragma once

#include <cctype>
#include <compare>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>

#include "btscan/bytes.hpp"

namespace btscan {

// IPv4 address as a host-order 32-bit integer.
struct Ipv4 {
  std::uint32_t value = 0;

  auto operator<=>(const Ipv4&) const = default;

  static Ipv4 from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return Ipv4{(static_cast<std::uint32_t>(a) << 24) | (static_cast<std::uint32_t>(b) << 16) |
                (static_cast<std::uint32_t>(c) << 8) | d};
  }

  static std::optional<Ipv4> parse(std::string_view s) {
    std::uint32_t octets[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
      if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) return std::nullopt;
      std::uint32_t v = 0;
      std::size_t digits = 0;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + static_cast<std::uint32_t>(s[pos] - '0');
        ++pos;
        if (++digits > 3 || v > 255) return std::nullopt;
      }
      octets[i] = v;
      if (i < 3) {
        if (pos >= s.size() || s[pos] != '.') return std::nullopt;
        ++pos;
      }
    }
    if (pos != s.size()) return std::nullopt;
    return from_octets(static_cast<std::uint8_t>(octets[0]), static_cast<std::uint8_t>(octets[1]),
                       static_cast<std::uint8_t>(octets[2]), static_cast<std::uint8_t>(octets[3]));
  }

  std::string str() const {
    std::ostringstream os;
    os << (value >> 24) << '.' << (value >> 16 & 0xff) << '.' << (value >> 8 & 0xff) << '.'
       << (value & 0xff);
    return os.str();
  }
};

struct Endpoint {
  Ipv4 ip;
  std::uint16_t port = 0;
  auto operator<=>(const Endpoint&) const = default;
};

enum class Proto : std::uint8_t { tcp, udp };

// TCP flag bits (subset the tracker cares about).
struct TcpFlags {
  bool syn = false;
  bool ack = false;
  bool rst = false;
  bool fin = false;

  bool operator==(const TcpFlags&) const = default;

  std::string str() const {
    std::string s;
    if (syn) s += 'S';
    if (ack) s += 'A';
    if (rst) s += 'R';
    if (fin) s += 'F';
    return s;
  }

  static std::optional<TcpFlags> parse(std::string_view s) {
    TcpFlags f;
    for (char c : s) {
      switch (c) {
        case 'S': f.syn = true; break;
        case 'A': f.ack = true; break;
        case 'R': f.rst = true; break;
        case 'F': f.fin = true; break;
        default: return std::nullopt;
      }
    }
    return f;
  }
};

// One captured datagram/segment, normalized from pcap or NDJSON input.
struct PacketRecord {
  double ts = 0.0;  // seconds since epoch, fractional
  Ipv4 src_ip;
  std::uint16_t src_port = 0;
  Ipv4 dst_ip;
  std::uint16_t dst_port = 0;
  Proto proto = Proto::tcp;
  TcpFlags tcp_flags;  // empty for udp
  Bytes payload;
};

enum class Outcome : std::uint8_t { attempted, established, failed };

// Outcome of a tracked TCP handshake or UDP exchange.
struct ConnectionEvent {
  double ts = 0.0;
  Ipv4 initiator;
  Ipv4 responder;
  std::uint16_t responder_port = 0;
  Proto proto = Proto::tcp;
  Outcome outcome = Outcome::attempted;

  bool operator==(const ConnectionEvent&) const = default;
};

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::attempted: return "attempted";
    case Outcome::established: return "established";
    case Outcome::failed: return "failed";
  }
  return "?";
}

}  // namespace btscan
