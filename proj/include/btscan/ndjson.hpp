#pragma once

#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btscan/bytes.hpp"
#include "btscan/packet.hpp"

namespace btscan {

// One packet per line:
// {"ts":1.0,"src":"10.0.0.1","sport":1234,"dst":"10.0.0.2","dport":80,
//  "proto":"tcp","flags":"S","payload_hex":""}
// flags is a string over {S,A,R,F}; payload_hex is even-length lowercase hex.

struct NdjsonLineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

namespace ndjson_detail {

inline std::optional<Bytes> parse_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  Bytes out;
  out.reserve(hex.size() / 2);
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nib(hex[i]), lo = nib(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

inline std::string to_hex(BytesView b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (std::uint8_t v : b) {
    s += digits[v >> 4];
    s += digits[v & 0x0f];
  }
  return s;
}

}  // namespace ndjson_detail

// Parses one NDJSON line into a PacketRecord; message explains a failure.
inline std::optional<PacketRecord> parse_ndjson_line(const std::string& line,
                                                     std::string* message = nullptr) {
  auto fail = [&](const std::string& m) -> std::optional<PacketRecord> {
    if (message) *message = m;
    return std::nullopt;
  };
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return fail("malformed JSON");
  if (!j.contains("ts") || !j["ts"].is_number()) return fail("missing/invalid ts");
  for (const char* k : {"src", "dst", "proto", "flags", "payload_hex"})
    if (!j.contains(k) || !j[k].is_string()) return fail(std::string("missing/invalid ") + k);
  for (const char* k : {"sport", "dport"}) {
    if (!j.contains(k) || !j[k].is_number_integer()) return fail(std::string("missing/invalid ") + k);
    auto v = j[k].get<std::int64_t>();
    if (v < 0 || v > 65535) return fail(std::string(k) + " out of range");
  }
  auto src = Ipv4::parse(j["src"].get<std::string>());
  auto dst = Ipv4::parse(j["dst"].get<std::string>());
  if (!src || !dst) return fail("invalid address");
  std::string proto = j["proto"].get<std::string>();
  if (proto != "tcp" && proto != "udp") return fail("proto must be tcp or udp");
  auto flags = TcpFlags::parse(j["flags"].get<std::string>());
  if (!flags) return fail("invalid flags");
  auto payload = ndjson_detail::parse_hex(j["payload_hex"].get<std::string>());
  if (!payload) return fail("invalid payload_hex");

  PacketRecord pr;
  pr.ts = j["ts"].get<double>();
  pr.src_ip = *src;
  pr.src_port = static_cast<std::uint16_t>(j["sport"].get<std::int64_t>());
  pr.dst_ip = *dst;
  pr.dst_port = static_cast<std::uint16_t>(j["dport"].get<std::int64_t>());
  pr.proto = proto == "tcp" ? Proto::tcp : Proto::udp;
  pr.tcp_flags = *flags;
  pr.payload = std::move(*payload);
  return pr;
}

// Lines failing the schema are reported with their line number; the stream
// continues past them.
inline std::vector<PacketRecord> read_ndjson(std::istream& in,
                                             std::vector<NdjsonLineError>* errors = nullptr) {
  std::vector<PacketRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string msg;
    auto pr = parse_ndjson_line(line, &msg);
    if (pr)
      out.push_back(std::move(*pr));
    else if (errors)
      errors->push_back({lineno, msg});
  }
  return out;
}

inline std::string format_ndjson_line(const PacketRecord& pr) {
  nlohmann::json j;
  j["ts"] = pr.ts;
  j["src"] = pr.src_ip.str();
  j["sport"] = pr.src_port;
  j["dst"] = pr.dst_ip.str();
  j["dport"] = pr.dst_port;
  j["proto"] = pr.proto == Proto::tcp ? "tcp" : "udp";
  j["flags"] = pr.tcp_flags.str();
  j["payload_hex"] = ndjson_detail::to_hex(pr.payload);
  return j.dump();
}

inline void write_ndjson(std::ostream& out, const std::vector<PacketRecord>& packets) {
  for (const auto& pr : packets) out << format_ndjson_line(pr) << '\n';
}

}  // namespace btscan
