#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "btscan/peermap.hpp"

using namespace btscan;

namespace {
const Ipv4 kSrcA = *Ipv4::parse("10.0.0.1");
const Ipv4 kSrcB = *Ipv4::parse("10.0.0.2");
const Ipv4 kPeer1 = *Ipv4::parse("51.0.0.1");
const Ipv4 kPeer2 = *Ipv4::parse("51.0.0.2");
}  // namespace

TEST_CASE("add and query") {
  PeerMappings map;
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::http_tracker, 100.0);
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 100.0));
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 500.0));
  // exact (ip, port) matching by default
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 6882, 100.0));
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer2, 6881, 100.0));
  // queries before the mapping existed do not match
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 6881, 99.0));
}

TEST_CASE("ttl expiry at the boundary") {
  PeerMappings map;  // default ttl 1800
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::mdht, 0.0);
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 1800.0));
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 6881, 1801.0));
}

TEST_CASE("re-adding an expired entry refreshes it") {
  PeerMappings map(100.0);
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::pex, 0.0);
  // live duplicate: first_seen stays, expiry unchanged
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::pex, 50.0);
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 6881, 101.0));
  // after expiry a fresh add starts a new window
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::pex, 200.0);
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 299.0));
  CHECK(map.stats().total == 1);
}

TEST_CASE("per-source isolation") {
  PeerMappings map;
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::udp_tracker, 10.0);
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 20.0));
  CHECK_FALSE(map.is_predicted(kSrcB, kPeer1, 6881, 20.0));
}

TEST_CASE("port zero is rejected and counted") {
  PeerMappings map;
  map.add(kSrcA, Endpoint{kPeer1, 0}, Provenance::http_tracker, 10.0);
  auto s = map.stats();
  CHECK(s.total == 0);
  CHECK(s.rejected_port_zero == 1);
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 0, 10.0));
}

TEST_CASE("per-source cap evicts the oldest entries") {
  PeerMappings map(1800.0, 3);
  for (std::uint16_t p = 1; p <= 5; ++p)
    map.add(kSrcA, Endpoint{kPeer1, p}, Provenance::mdht, static_cast<double>(p));
  CHECK(map.stats().total == 3);
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 1, 10.0));
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer1, 2, 10.0));
  CHECK(map.is_predicted(kSrcA, kPeer1, 3, 10.0));
  CHECK(map.is_predicted(kSrcA, kPeer1, 5, 10.0));
  // the cap is per source: another source is unaffected
  map.add(kSrcB, Endpoint{kPeer2, 1}, Provenance::mdht, 1.0);
  CHECK(map.is_predicted(kSrcB, kPeer2, 1, 10.0));
}

TEST_CASE("ip-only matching mode") {
  PeerMappings map(1800.0, 50000, /*match_port=*/false);
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::adht, 10.0);
  CHECK(map.is_predicted(kSrcA, kPeer1, 6881, 20.0));
  CHECK(map.is_predicted(kSrcA, kPeer1, 1234, 20.0));  // any port on a known peer
  CHECK_FALSE(map.is_predicted(kSrcA, kPeer2, 6881, 20.0));
}

TEST_CASE("stats by provenance and source") {
  PeerMappings map;
  map.add(kSrcA, Endpoint{kPeer1, 1}, Provenance::http_tracker, 1.0);
  map.add(kSrcA, Endpoint{kPeer1, 2}, Provenance::http_tracker, 1.0);
  map.add(kSrcA, Endpoint{kPeer2, 1}, Provenance::pex, 1.0);
  map.add(kSrcB, Endpoint{kPeer2, 1}, Provenance::btudp, 2.0);
  auto s = map.stats();
  CHECK(s.total == 4);
  CHECK(s.by_provenance.at("http_tracker") == 2);
  CHECK(s.by_provenance.at("pex") == 1);
  CHECK(s.by_provenance.at("btudp") == 1);
  CHECK(s.by_source.at("10.0.0.1") == 3);
  CHECK(s.by_source.at("10.0.0.2") == 1);
}

TEST_CASE("ndjson export is one valid object per mapping") {
  PeerMappings map;
  map.add(kSrcA, Endpoint{kPeer1, 6881}, Provenance::mdht, 12.5);
  map.add(kSrcB, Endpoint{kPeer2, 51413}, Provenance::pex, 13.0);
  std::ostringstream os;
  map.export_ndjson(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("source"));
    CHECK(j.contains("target"));
    CHECK(j.contains("port"));
    CHECK(j.contains("provenance"));
    CHECK(j.contains("first_seen"));
  }
  CHECK(lines == 2);
}
