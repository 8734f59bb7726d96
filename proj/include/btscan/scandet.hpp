#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "btscan/packet.hpp"
#include "btscan/peermap.hpp"

namespace btscan {

struct DetectorConfig {
  // distinct-failed-destination counts at which AddressScan fires, ascending
  std::vector<std::size_t> report_thresholds = {20, 100};
  double window = 900.0;  // sliding window over failed destinations, seconds
  std::size_t shutdown_threshold = 100;
  double ppr_lower = 0.75;
  double ppr_upper = 1.0;
  bool suppress_predicted = true;
  bool suppress_ppr = true;
};

enum class AlarmKind : std::uint8_t {
  AddressScan,
  ShutdownThresh,
  ScanSummary,
  PortScanSummary,
  SuppressedByPrediction,
  SuppressedByPPR,
};

inline const char* alarm_kind_name(AlarmKind k) {
  switch (k) {
    case AlarmKind::AddressScan: return "AddressScan";
    case AlarmKind::ShutdownThresh: return "ShutdownThresh";
    case AlarmKind::ScanSummary: return "ScanSummary";
    case AlarmKind::PortScanSummary: return "PortScanSummary";
    case AlarmKind::SuppressedByPrediction: return "SuppressedByPrediction";
    case AlarmKind::SuppressedByPPR: return "SuppressedByPPR";
  }
  return "?";
}

struct Alarm {
  AlarmKind kind = AlarmKind::AddressScan;
  double ts = 0;
  Ipv4 source;
  std::size_t count = 0;
  std::string detail;

  bool operator==(const Alarm&) const = default;

  // `<ts> <kind> <source> <count> <detail>` (bit-stable for tests)
  std::string log_line() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << ts << ' ' << alarm_kind_name(kind) << ' '
       << source.str() << ' ' << count << ' ' << detail;
    return os.str();
  }
};

// Suppressed* records are informational; everything else is a real alarm.
inline bool is_suppression(AlarmKind k) {
  return k == AlarmKind::SuppressedByPrediction || k == AlarmKind::SuppressedByPPR;
}

// Failed-connection scan detector with two suppression mechanisms:
// predicted-connection filtering and Port/Peer-Ratio gating at
// threshold-crossing instants.
class ScanTracker {
 public:
  explicit ScanTracker(DetectorConfig cfg = {}) : cfg_(std::move(cfg)) {}

  const DetectorConfig& config() const { return cfg_; }

  // PPR = |unique ports probed| / |unique peer IPs probed|, cumulative over
  // the trace. Absent when the source probed no peers.
  std::optional<double> compute_ppr(Ipv4 source) const {
    auto it = sources_.find(source.value);
    if (it == sources_.end() || it->second.peers.empty()) return std::nullopt;
    return static_cast<double>(it->second.ports.size()) /
           static_cast<double>(it->second.peers.size());
  }

  std::vector<Alarm> observe(const ConnectionEvent& ev, const PeerMappings& map) {
    std::vector<Alarm> out;
    if (ev.outcome == Outcome::attempted) return out;  // only terminal events

    SourceState& st = sources_[ev.initiator.value];
    // behavioral sets describe the host: every terminal probe counts,
    // including predicted ones
    st.ports.insert(ev.responder_port);
    st.peers.insert(ev.responder.value);

    if (ev.outcome != Outcome::failed) return out;
    if (st.shutdown) return out;  // source silenced

    if (cfg_.suppress_predicted &&
        map.is_predicted(ev.initiator, ev.responder, ev.responder_port, ev.ts)) {
      out.push_back(Alarm{AlarmKind::SuppressedByPrediction, ev.ts, ev.initiator, 1,
                          ev.responder.str() + ":" + std::to_string(ev.responder_port)});
      return out;  // excluded from the distinct-failed count
    }

    st.failed_dests[ev.responder.value] = ev.ts;
    for (auto it = st.failed_dests.begin(); it != st.failed_dests.end();) {
      if (it->second < ev.ts - cfg_.window)
        it = st.failed_dests.erase(it);
      else
        ++it;
    }
    std::size_t count = st.failed_dests.size();

    bool ppr_gate = false;
    if (cfg_.suppress_ppr && !st.peers.empty()) {
      double ppr = static_cast<double>(st.ports.size()) / static_cast<double>(st.peers.size());
      ppr_gate = ppr >= cfg_.ppr_lower && ppr <= cfg_.ppr_upper;
    }

    for (std::size_t threshold : cfg_.report_thresholds) {
      if (count < threshold || st.fired.count(threshold)) continue;
      st.fired.insert(threshold);
      if (ppr_gate) {
        out.push_back(Alarm{AlarmKind::SuppressedByPPR, ev.ts, ev.initiator, threshold,
                            "ppr in [" + format_ratio(cfg_.ppr_lower) + ", " +
                                format_ratio(cfg_.ppr_upper) + "]"});
      } else {
        st.flagged = true;
        out.push_back(Alarm{AlarmKind::AddressScan, ev.ts, ev.initiator, threshold,
                            "has scanned " + std::to_string(count) + " hosts (" +
                                std::to_string(ev.responder_port) + "/" +
                                (ev.proto == Proto::tcp ? "tcp" : "udp") + ")"});
      }
    }

    if (count >= cfg_.shutdown_threshold && !st.shutdown) {
      if (ppr_gate) {
        // a PPR-suppressed source is treated as P2P at this instant; it is
        // neither shut down nor alarmed
      } else {
        st.shutdown = true;
        out.push_back(Alarm{AlarmKind::ShutdownThresh, ev.ts, ev.initiator, count,
                            "shutdown threshold reached"});
      }
    }
    last_ts_ = std::max(last_ts_, ev.ts);
    return out;
  }

  // End-of-trace summaries for flagged sources.
  std::vector<Alarm> finalize() const {
    std::vector<Alarm> out;
    for (const auto& [src, st] : sources_) {
      if (!st.flagged) continue;
      out.push_back(Alarm{AlarmKind::ScanSummary, last_ts_, Ipv4{src}, st.peers.size(),
                          "scanned a total of " + std::to_string(st.peers.size()) + " hosts"});
      out.push_back(Alarm{AlarmKind::PortScanSummary, last_ts_, Ipv4{src}, st.ports.size(),
                          "scanned a total of " + std::to_string(st.ports.size()) + " ports"});
    }
    return out;
  }

  bool flagged(Ipv4 source) const {
    auto it = sources_.find(source.value);
    return it != sources_.end() && it->second.flagged;
  }

  std::vector<Ipv4> flagged_sources() const {
    std::vector<Ipv4> out;
    for (const auto& [src, st] : sources_)
      if (st.flagged) out.push_back(Ipv4{src});
    return out;
  }

 private:
  struct SourceState {
    std::map<std::uint32_t, double> failed_dests;  // dst -> latest failure ts in window
    std::set<std::uint16_t> ports;                 // cumulative unique ports probed
    std::set<std::uint32_t> peers;                 // cumulative unique peer IPs probed
    std::set<std::size_t> fired;                   // report thresholds already crossed
    bool shutdown = false;
    bool flagged = false;
  };

  static std::string format_ratio(double r) {
    std::ostringstream os;
    os << r;
    return os.str();
  }

  DetectorConfig cfg_;
  std::map<std::uint32_t, SourceState> sources_;
  double last_ts_ = 0;
};

}  // namespace btscan
