#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "btscan/conntrack.hpp"
#include "btscan/dht.hpp"
#include "btscan/packet.hpp"
#include "btscan/peermap.hpp"
#include "btscan/pex.hpp"
#include "btscan/scandet.hpp"
#include "btscan/trackers.hpp"

namespace btscan {

struct AnalyzerSet {
  bool http_tracker = true;
  bool udp_tracker = true;
  bool adht = true;
  bool mdht = true;
  bool btudp = true;
  bool pex = true;
};

struct PipelineConfig {
  AnalyzerSet analyzers;
  AdhtConfig adht;
  SignatureTable signatures = default_signatures();
  DetectorConfig detector;
  double handshake_timeout = 30.0;
  double peermap_ttl = 1800.0;
  std::size_t peermap_cap = 50000;
  bool peermap_match_port = true;
  bool pex_credit_both = true;  // credit gossip sender and receiver
};

// One terminal connection event, annotated with whether it was predicted by
// the coordination traffic seen so far.
struct AnnotatedEvent {
  ConnectionEvent event;
  bool predicted = false;
};

struct AnalysisResult {
  std::vector<Alarm> alarms;
  std::vector<AnnotatedEvent> events;            // terminal events in delivery order
  std::map<std::uint32_t, double> first_packet;  // source ip -> first packet ts
  std::vector<Ipv4> flagged;
  PeerMapStats peermap_stats;
};

// Single-pass analysis: coordination analyzers feed the peer map while the
// connection tracker turns packets into events for the scan detector. One
// pipeline per trace; no shared state across traces.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg = {})
      : cfg_(std::move(cfg)),
        tracker_(cfg_.handshake_timeout),
        peermap_(cfg_.peermap_ttl, cfg_.peermap_cap, cfg_.peermap_match_port),
        detector_(cfg_.detector) {}

  void process(const PacketRecord& pkt) {
    result_.first_packet.emplace(pkt.src_ip.value, pkt.ts);
    run_analyzers(pkt);
    for (const auto& ev : tracker_.process(pkt)) handle_event(ev);
  }

  AnalysisResult finish() {
    for (const auto& ev : tracker_.flush()) handle_event(ev);
    auto summaries = detector_.finalize();
    result_.alarms.insert(result_.alarms.end(), summaries.begin(), summaries.end());
    result_.flagged = detector_.flagged_sources();
    result_.peermap_stats = peermap_.stats();
    return std::move(result_);
  }

  const PeerMappings& peermap() const { return peermap_; }
  const ScanTracker& detector() const { return detector_; }

 private:
  void run_analyzers(const PacketRecord& pkt) {
    if (pkt.proto == Proto::tcp) {
      if (cfg_.analyzers.http_tracker) {
        // tracker responses map the receiving endpoint as the future initiator
        for (const auto& ep : scan_http_tracker(pkt))
          peermap_.add(pkt.dst_ip, ep, Provenance::http_tracker, pkt.ts);
      }
      if (cfg_.analyzers.pex) {
        for (const auto& ep : scan_utpex(pkt)) {
          peermap_.add(pkt.dst_ip, ep, Provenance::pex, pkt.ts);
          if (cfg_.pex_credit_both) peermap_.add(pkt.src_ip, ep, Provenance::pex, pkt.ts);
        }
      }
      return;
    }
    if (cfg_.analyzers.udp_tracker) {
      if (auto resp = parse_udp_tracker(pkt)) {
        for (const auto& ep : resp->peers)
          if (usable_peer(ep)) peermap_.add(pkt.dst_ip, ep, Provenance::udp_tracker, pkt.ts);
      }
    }
    if (cfg_.analyzers.adht) {
      if (auto req = adht_parse_request(pkt, cfg_.adht)) {
        adht_register(*req, pkt.src_ip, adht_table_, pkt.ts, cfg_.adht);
      } else if (auto reply = adht_parse_reply(pkt, adht_table_, pkt.ts, cfg_.adht)) {
        for (const auto& ep : reply->peers)
          if (usable_peer(ep)) peermap_.add(reply->requester, ep, Provenance::adht, pkt.ts);
      }
    }
    if (cfg_.analyzers.mdht) {
      for (const auto& ep : mdht_extract(pkt))
        peermap_.add(pkt.dst_ip, ep, Provenance::mdht, pkt.ts);
    }
    if (cfg_.analyzers.btudp) {
      if (btudp_match(pkt, cfg_.signatures) && pkt.dst_port != 0)
        peermap_.add(pkt.src_ip, Endpoint{pkt.dst_ip, pkt.dst_port}, Provenance::btudp, pkt.ts);
    }
  }

  void handle_event(const ConnectionEvent& ev) {
    if (ev.outcome != Outcome::attempted) {
      bool predicted =
          peermap_.is_predicted(ev.initiator, ev.responder, ev.responder_port, ev.ts);
      result_.events.push_back(AnnotatedEvent{ev, predicted});
    }
    auto alarms = detector_.observe(ev, peermap_);
    result_.alarms.insert(result_.alarms.end(), alarms.begin(), alarms.end());
  }

  PipelineConfig cfg_;
  ConnectionTracker tracker_;
  PeerMappings peermap_;
  AdhtTransactionTable adht_table_;
  ScanTracker detector_;
  AnalysisResult result_;
};

inline AnalysisResult analyze_packets(const std::vector<PacketRecord>& packets,
                                      PipelineConfig cfg = {}) {
  Pipeline pipeline(std::move(cfg));
  for (const auto& pkt : packets) pipeline.process(pkt);
  return pipeline.finish();
}

}  // namespace btscan
