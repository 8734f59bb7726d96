#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "btscan/conntrack.hpp"
#include "btscan/ndjson.hpp"
#include "btscan/pcap.hpp"

using namespace btscan;

namespace {

PacketRecord tcp(double ts, const char* src, std::uint16_t sport, const char* dst,
                 std::uint16_t dport, const char* flags) {
  return PacketRecord{ts,
                      *Ipv4::parse(src),
                      sport,
                      *Ipv4::parse(dst),
                      dport,
                      Proto::tcp,
                      *TcpFlags::parse(flags),
                      {}};
}

PacketRecord udp(double ts, const char* src, std::uint16_t sport, const char* dst,
                 std::uint16_t dport) {
  return PacketRecord{ts,         *Ipv4::parse(src), sport, *Ipv4::parse(dst), dport,
                      Proto::udp, TcpFlags{},        {}};
}

std::vector<ConnectionEvent> run(ConnectionTracker& tracker,
                                 const std::vector<PacketRecord>& packets) {
  std::vector<ConnectionEvent> events;
  for (const auto& pkt : packets)
    for (auto& ev : tracker.process(pkt)) events.push_back(ev);
  for (auto& ev : tracker.flush()) events.push_back(ev);
  return events;
}

}  // namespace

TEST_CASE("ndjson round trip and schema errors") {
  std::string good =
      R"({"ts":1.0,"src":"10.0.0.1","sport":1234,"dst":"10.0.0.2","dport":80,"proto":"tcp","flags":"S","payload_hex":""})";
  auto pr = parse_ndjson_line(good);
  REQUIRE(pr.has_value());
  CHECK(pr->tcp_flags.syn);
  CHECK_FALSE(pr->tcp_flags.ack);
  CHECK(pr->src_ip.str() == "10.0.0.1");
  auto round = parse_ndjson_line(format_ndjson_line(*pr));
  REQUIRE(round.has_value());
  CHECK(format_ndjson_line(*round) == format_ndjson_line(*pr));

  std::string bad_port =
      R"({"ts":1.0,"src":"10.0.0.1","sport":1234,"dst":"10.0.0.2","dport":70000,"proto":"tcp","flags":"S","payload_hex":""})";
  std::stringstream in(good + "\n" + bad_port + "\nnot json\n");
  std::vector<NdjsonLineError> errors;
  auto packets = read_ndjson(in, &errors);
  CHECK(packets.size() == 1);
  REQUIRE(errors.size() == 2);
  CHECK(errors[0].line == 2);
  CHECK(errors[1].line == 3);

  std::stringstream empty("");
  CHECK(read_ndjson(empty).empty());
}

TEST_CASE("pcap round trip, both magics") {
  std::vector<PacketRecord> packets = {
      tcp(1.5, "10.0.0.1", 1234, "10.0.0.2", 80, "S"),
      udp(2.25, "10.0.0.3", 5555, "10.0.0.4", 6881),
  };
  packets[1].payload = to_bytes("hello");

  std::ostringstream os(std::ios::binary);
  write_pcap_header(os);
  for (const auto& pkt : packets) write_pcap_record(os, pkt);
  std::string native = os.str();

  std::istringstream is(native, std::ios::binary);
  auto back = read_pcap(is);
  REQUIRE(back.size() == 2);
  CHECK(back[0].src_ip == packets[0].src_ip);
  CHECK(back[0].tcp_flags.syn);
  CHECK(back[0].ts == doctest::Approx(1.5));
  CHECK(back[1].payload == to_bytes("hello"));
  CHECK(back[1].dst_port == 6881);

  // byte-swap the whole file header to fake the other endianness
  std::string swapped = native;
  auto swap32 = [&](std::size_t off) {
    std::swap(swapped[off], swapped[off + 3]);
    std::swap(swapped[off + 1], swapped[off + 2]);
  };
  for (std::size_t off : {0u, 4u, 8u, 12u, 16u, 20u}) swap32(off);
  // and each record header
  std::size_t pos = 24;
  std::istringstream count_is(native, std::ios::binary);
  for (const auto& pkt : packets) {
    (void)pkt;
    std::uint32_t incl = static_cast<std::uint8_t>(native[pos + 8]) |
                         (static_cast<std::uint8_t>(native[pos + 9]) << 8) |
                         (static_cast<std::uint8_t>(native[pos + 10]) << 16) |
                         (static_cast<std::uint8_t>(native[pos + 11]) << 24);
    for (std::size_t off : {pos, pos + 4, pos + 8, pos + 12}) swap32(off);
    pos += 16 + incl;
  }
  std::istringstream swapped_is(swapped, std::ios::binary);
  auto swapped_back = read_pcap(swapped_is);
  REQUIRE(swapped_back.size() == 2);
  CHECK(swapped_back[0].src_ip == packets[0].src_ip);
  CHECK(swapped_back[1].dst_port == 6881);
}

TEST_CASE("pcap errors") {
  std::istringstream bad_magic("XXXXAAAAAAAAAAAAAAAAAAAA", std::ios::binary);
  CHECK_THROWS_AS(read_pcap(bad_magic), UnsupportedFormatError);

  // truncated trailing record stops with the partial-trace flag
  std::ostringstream os(std::ios::binary);
  write_pcap_header(os);
  write_pcap_record(os, tcp(1.0, "10.0.0.1", 1, "10.0.0.2", 2, "S"));
  std::string data = os.str();
  data.resize(data.size() - 5);
  std::istringstream is(data, std::ios::binary);
  PcapReadStats stats;
  auto packets = read_pcap(is, &stats);
  CHECK(packets.empty());
  CHECK(stats.truncated);
}

TEST_CASE("pcap skips non-IP and non-TCP/UDP frames") {
  std::ostringstream os(std::ios::binary);
  write_pcap_header(os);
  write_pcap_record(os, udp(1.0, "10.0.0.1", 1, "10.0.0.2", 2));
  std::string data = os.str();
  // append a fake ARP frame (ethertype 0x0806)
  std::string arp_rec(16, '\0');
  arp_rec[8] = 60;  // incl_len (little endian)
  arp_rec[12] = 60;
  std::string arp_frame(60, '\0');
  arp_frame[12] = 0x08;
  arp_frame[13] = 0x06;
  data += arp_rec + arp_frame;
  std::istringstream is(data, std::ios::binary);
  PcapReadStats stats;
  auto packets = read_pcap(is, &stats);
  CHECK(packets.size() == 1);
  CHECK(stats.frames == 2);
}

TEST_CASE("tcp three-way handshake") {
  ConnectionTracker tracker;
  auto events = run(tracker, {
                                 tcp(1.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S"),
                                 tcp(1.1, "10.0.0.2", 80, "10.0.0.1", 1000, "SA"),
                                 tcp(1.2, "10.0.0.1", 1000, "10.0.0.2", 80, "A"),
                             });
  REQUIRE(events.size() == 2);
  CHECK(events[0].outcome == Outcome::attempted);
  CHECK(events[1].outcome == Outcome::established);
  CHECK(events[1].initiator.str() == "10.0.0.1");
  CHECK(events[1].responder_port == 80);
}

TEST_CASE("tcp reset by responder fails") {
  ConnectionTracker tracker;
  auto events = run(tracker, {
                                 tcp(1.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S"),
                                 tcp(1.1, "10.0.0.2", 80, "10.0.0.1", 1000, "RA"),
                             });
  REQUIRE(events.size() == 2);
  CHECK(events[1].outcome == Outcome::failed);
  CHECK(events[1].ts == doctest::Approx(1.1));
}

TEST_CASE("tcp timeout failure carries the SYN timestamp") {
  ConnectionTracker tracker;  // default 30 s
  std::vector<ConnectionEvent> events;
  for (auto& ev : tracker.process(tcp(0.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S")))
    events.push_back(ev);
  // unrelated later packet triggers the lazy check
  for (auto& ev : tracker.process(tcp(31.0, "10.0.0.9", 1, "10.0.0.8", 2, "S")))
    events.push_back(ev);
  REQUIRE(events.size() == 3);
  CHECK(events[1].outcome == Outcome::failed);
  CHECK(events[1].ts == doctest::Approx(0.0));
  CHECK(events[1].responder.str() == "10.0.0.2");
}

TEST_CASE("syn retransmission stays one probe") {
  ConnectionTracker tracker;
  auto events = run(tracker, {
                                 tcp(1.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S"),
                                 tcp(2.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S"),
                             });
  std::size_t attempted = 0, failed = 0;
  for (const auto& ev : events) {
    attempted += ev.outcome == Outcome::attempted;
    failed += ev.outcome == Outcome::failed;
  }
  CHECK(attempted == 1);
  CHECK(failed == 1);  // flush converts the pending flow
}

TEST_CASE("udp exchange") {
  ConnectionTracker tracker;
  SUBCASE("single datagram attempts then fails at flush") {
    auto events = run(tracker, {udp(1.0, "10.0.0.1", 1000, "10.0.0.2", 6881)});
    REQUIRE(events.size() == 2);
    CHECK(events[0].outcome == Outcome::attempted);
    CHECK(events[1].outcome == Outcome::failed);
  }
  SUBCASE("request then response establishes") {
    auto events = run(tracker, {
                                   udp(1.0, "10.0.0.1", 1000, "10.0.0.2", 6881),
                                   udp(1.1, "10.0.0.2", 6881, "10.0.0.1", 1000),
                               });
    REQUIRE(events.size() == 2);
    CHECK(events[1].outcome == Outcome::established);
    CHECK(events[1].initiator.str() == "10.0.0.1");
  }
  SUBCASE("five datagrams, one attempted") {
    std::vector<PacketRecord> packets;
    for (int i = 0; i < 5; ++i)
      packets.push_back(udp(1.0 + i, "10.0.0.1", 1000, "10.0.0.2", 6881));
    auto events = run(tracker, packets);
    std::size_t attempted = 0;
    for (const auto& ev : events) attempted += ev.outcome == Outcome::attempted;
    CHECK(attempted == 1);
  }
}

// Brute-force per-flow oracle: group packets by flow offline, apply the
// handshake rules to each flow independently.
namespace {

struct OracleOutcome {
  double attempted_ts = -1;
  double last_ts = -1;  // ts of the last packet belonging to the flow
  double terminal_ts = -1;
  Outcome terminal = Outcome::failed;
  bool has_terminal = false;
};

std::map<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>, OracleOutcome>
tcp_oracle(const std::vector<PacketRecord>& packets, double timeout) {
  std::map<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>, OracleOutcome>
      flows;
  // pass 1: discover initiators via first SYN
  for (const auto& pkt : packets) {
    if (pkt.proto != Proto::tcp || !pkt.tcp_flags.syn || pkt.tcp_flags.ack) continue;
    auto key = std::make_tuple(pkt.src_ip.value, pkt.src_port, pkt.dst_ip.value, pkt.dst_port);
    auto rev = std::make_tuple(pkt.dst_ip.value, pkt.dst_port, pkt.src_ip.value, pkt.src_port);
    if (flows.count(key) || flows.count(rev)) continue;
    flows[key].attempted_ts = pkt.ts;
    flows[key].last_ts = pkt.ts;
  }
  // pass 2: resolve each flow by replaying its packets in order
  for (auto& [key, oc] : flows) {
    int state = 0;  // 0 syn_sent, 1 synack, 2 done
    for (const auto& pkt : packets) {
      if (pkt.proto != Proto::tcp || state == 2) continue;
      bool fwd = pkt.src_ip.value == std::get<0>(key) && pkt.src_port == std::get<1>(key) &&
                 pkt.dst_ip.value == std::get<2>(key) && pkt.dst_port == std::get<3>(key);
      bool rev = pkt.dst_ip.value == std::get<0>(key) && pkt.dst_port == std::get<1>(key) &&
                 pkt.src_ip.value == std::get<2>(key) && pkt.src_port == std::get<3>(key);
      if (!fwd && !rev) {
        // unrelated packet; may still trigger the timeout
        if (state == 0 && oc.attempted_ts + timeout < pkt.ts) {
          oc.has_terminal = true;
          oc.terminal = Outcome::failed;
          oc.terminal_ts = oc.attempted_ts;
          state = 2;
        }
        continue;
      }
      if (state == 0 && pkt.ts > oc.attempted_ts + timeout) {
        oc.has_terminal = true;
        oc.terminal = Outcome::failed;
        oc.terminal_ts = oc.attempted_ts;
        state = 2;
        continue;
      }
      oc.last_ts = pkt.ts;
      if (rev && state == 0 && pkt.tcp_flags.rst) {
        oc.has_terminal = true;
        oc.terminal = Outcome::failed;
        oc.terminal_ts = pkt.ts;
        state = 2;
      } else if (rev && state == 0 && pkt.tcp_flags.syn && pkt.tcp_flags.ack) {
        state = 1;
      } else if (fwd && state == 1 && pkt.tcp_flags.ack && !pkt.tcp_flags.syn &&
                 !pkt.tcp_flags.rst) {
        oc.has_terminal = true;
        oc.terminal = Outcome::established;
        oc.terminal_ts = pkt.ts;
        state = 2;
      }
    }
    if (!oc.has_terminal) {
      // flush semantics: unanswered SYNs fail at the SYN timestamp; flows
      // that saw a SYN-ACK count as established at their last packet
      oc.has_terminal = true;
      oc.terminal = state == 1 ? Outcome::established : Outcome::failed;
      oc.terminal_ts = state == 1 ? oc.last_ts : oc.attempted_ts;
    }
  }
  return flows;
}

}  // namespace

TEST_CASE("streaming tracker equals the brute-force per-flow oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    // random traffic over a tiny host/port space to force flow collisions
    std::vector<PacketRecord> packets;
    double ts = 0;
    std::size_t n = 20 + rng() % 200;
    for (std::size_t i = 0; i < n; ++i) {
      ts += static_cast<double>(rng() % 2000) / 100.0;  // up to 20 s steps
      auto host = [&] { return std::string("10.0.0.") + std::to_string(1 + rng() % 4); };
      const char* flag_sets[] = {"S", "SA", "A", "RA", "R", "F"};
      packets.push_back(tcp(ts, host().c_str(), static_cast<std::uint16_t>(1000 + rng() % 3),
                            host().c_str(), static_cast<std::uint16_t>(80 + rng() % 3),
                            flag_sets[rng() % 6]));
    }

    ConnectionTracker tracker;
    auto events = run(tracker, packets);

    std::map<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>,
             std::vector<ConnectionEvent>>
        by_flow;
    for (const auto& ev : events)
      by_flow[std::make_tuple(ev.initiator.value, std::uint16_t{0}, ev.responder.value,
                              ev.responder_port)]
          .push_back(ev);

    auto oracle = tcp_oracle(packets, 30.0);
    // every SYN-observed flow yields exactly one terminal event, equal to the
    // oracle's outcome
    std::size_t oracle_terminals = 0;
    for (const auto& [key, oc] : oracle) {
      ++oracle_terminals;
      auto it = by_flow.find(std::make_tuple(std::get<0>(key), std::uint16_t{0},
                                             std::get<2>(key), std::get<3>(key)));
      REQUIRE(it != by_flow.end());
      std::size_t terminals = 0;
      for (const auto& ev : it->second) {
        if (ev.outcome == Outcome::attempted) continue;
        ++terminals;
      }
      // several initiator ports can share (initiator, responder, port); just
      // check totals below for those
      CHECK(terminals >= 1);
    }
    std::size_t streaming_terminals = 0, streaming_attempts = 0;
    for (const auto& ev : events) {
      if (ev.outcome == Outcome::attempted)
        ++streaming_attempts;
      else
        ++streaming_terminals;
    }
    CHECK(streaming_terminals == oracle_terminals);
    CHECK(streaming_attempts == oracle_terminals);
    std::multiset<std::pair<int, double>> a, b;
    for (const auto& ev : events)
      if (ev.outcome != Outcome::attempted)
        a.emplace(ev.outcome == Outcome::established ? 1 : 0, ev.ts);
    for (const auto& [key, oc] : oracle)
      b.emplace(oc.terminal == Outcome::established ? 1 : 0, oc.terminal_ts);
    CHECK(a == b);
  }
}

TEST_CASE("replaying a trace twice is deterministic") {
  std::mt19937_64 rng(7);
  std::vector<PacketRecord> packets;
  for (int i = 0; i < 100; ++i) {
    const char* flag_sets[] = {"S", "SA", "A", "RA"};
    packets.push_back(tcp(i * 0.5, "10.0.0.1", static_cast<std::uint16_t>(1000 + rng() % 5),
                          "10.0.0.2", static_cast<std::uint16_t>(80 + rng() % 5),
                          flag_sets[rng() % 4]));
  }
  ConnectionTracker t1, t2;
  CHECK(run(t1, packets) == run(t2, packets));
}
