#pragma once

#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "btscan/packet.hpp"

namespace btscan {

// Reconstructs TCP handshake outcomes and UDP exchanges from a packet stream.
//
// TCP: `attempted` on the first SYN of a flow; `established` on SYN, SYN-ACK,
// ACK; `failed` when the responder RSTs a SYN-sent flow or when no SYN-ACK
// arrives within handshake_timeout of the first SYN (checked lazily against
// later packet timestamps and at end-of-trace). Timeout failures carry the
// SYN's timestamp.
//
// UDP: first packet of a (src, dst, dport) triple is `attempted`; a
// reverse-direction packet upgrades it to `established`; triples still
// pending at flush become `failed`.
class ConnectionTracker {
 public:
  explicit ConnectionTracker(double handshake_timeout = 30.0)
      : handshake_timeout_(handshake_timeout) {}

  std::vector<ConnectionEvent> process(const PacketRecord& pkt) {
    std::vector<ConnectionEvent> out;
    expire_tcp(pkt.ts, out);
    if (pkt.proto == Proto::tcp)
      track_tcp(pkt, out);
    else
      track_udp(pkt, out);
    return out;
  }

  // End-of-trace: pending SYN-sent flows fail (a scanner's unanswered probes
  // are failures); flows that got a SYN-ACK but no final ACK count as
  // established since the responder demonstrably answered. Unanswered UDP
  // triples fail.
  std::vector<ConnectionEvent> flush() {
    std::vector<ConnectionEvent> out;
    for (auto& [key, flow] : tcp_flows_) {
      if (flow.state == TcpState::syn_sent)
        out.push_back(make_event(key, flow.syn_ts, Outcome::failed));
      else if (flow.state == TcpState::synack_seen)
        out.push_back(make_event(key, flow.last_ts, Outcome::established));
      flow.state = TcpState::done;
    }
    for (auto& [key, st] : udp_flows_) {
      if (!st.established)
        out.push_back(ConnectionEvent{st.first_ts, Ipv4{std::get<0>(key)}, Ipv4{std::get<1>(key)},
                                      std::get<2>(key), Proto::udp, Outcome::failed});
      st.established = true;
    }
    return out;
  }

 private:
  enum class TcpState : std::uint8_t { syn_sent, synack_seen, done };

  // initiator ip, initiator port, responder ip, responder port
  using TcpKey = std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>;
  // src ip, dst ip, dst port
  using UdpKey = std::tuple<std::uint32_t, std::uint32_t, std::uint16_t>;

  struct TcpFlow {
    TcpState state = TcpState::syn_sent;
    double syn_ts = 0;
    double last_ts = 0;
  };

  struct UdpFlow {
    double first_ts = 0;
    bool established = false;
  };

  static ConnectionEvent make_event(const TcpKey& key, double ts, Outcome outcome) {
    return ConnectionEvent{ts,          Ipv4{std::get<0>(key)}, Ipv4{std::get<2>(key)},
                           std::get<3>(key), Proto::tcp,        outcome};
  }

  void expire_tcp(double now, std::vector<ConnectionEvent>& out) {
    while (!pending_.empty()) {
      auto it = pending_.begin();
      if (it->first + handshake_timeout_ >= now) break;
      auto flow_it = tcp_flows_.find(it->second);
      if (flow_it != tcp_flows_.end() && flow_it->second.state == TcpState::syn_sent &&
          flow_it->second.syn_ts == it->first) {
        out.push_back(make_event(it->second, flow_it->second.syn_ts, Outcome::failed));
        flow_it->second.state = TcpState::done;
      }
      pending_.erase(it);
    }
  }

  void track_tcp(const PacketRecord& pkt, std::vector<ConnectionEvent>& out) {
    TcpKey fwd{pkt.src_ip.value, pkt.src_port, pkt.dst_ip.value, pkt.dst_port};
    TcpKey rev{pkt.dst_ip.value, pkt.dst_port, pkt.src_ip.value, pkt.src_port};

    if (auto it = tcp_flows_.find(fwd); it != tcp_flows_.end()) {
      // packet from the initiator
      TcpFlow& flow = it->second;
      flow.last_ts = pkt.ts;
      if (flow.state == TcpState::synack_seen && pkt.tcp_flags.ack && !pkt.tcp_flags.syn &&
          !pkt.tcp_flags.rst) {
        flow.state = TcpState::done;
        out.push_back(make_event(fwd, pkt.ts, Outcome::established));
      }
      // SYN retransmissions: still one probe of one destination, ignored
      return;
    }
    if (auto it = tcp_flows_.find(rev); it != tcp_flows_.end()) {
      // packet from the responder
      TcpFlow& flow = it->second;
      flow.last_ts = pkt.ts;
      if (flow.state == TcpState::syn_sent) {
        if (pkt.tcp_flags.rst) {
          flow.state = TcpState::done;
          out.push_back(make_event(rev, pkt.ts, Outcome::failed));
        } else if (pkt.tcp_flags.syn && pkt.tcp_flags.ack) {
          flow.state = TcpState::synack_seen;
        }
      }
      return;
    }
    if (pkt.tcp_flags.syn && !pkt.tcp_flags.ack) {
      tcp_flows_.emplace(fwd, TcpFlow{TcpState::syn_sent, pkt.ts, pkt.ts});
      pending_.emplace(pkt.ts, fwd);
      out.push_back(make_event(fwd, pkt.ts, Outcome::attempted));
    }
    // anything else mid-stream without an observed SYN is ignored
  }

  void track_udp(const PacketRecord& pkt, std::vector<ConnectionEvent>& out) {
    UdpKey fwd{pkt.src_ip.value, pkt.dst_ip.value, pkt.dst_port};
    // a reverse packet answers any pending triple addressed from its source port
    UdpKey rev{pkt.dst_ip.value, pkt.src_ip.value, pkt.src_port};

    if (auto it = udp_flows_.find(rev); it != udp_flows_.end() && !it->second.established) {
      it->second.established = true;
      out.push_back(ConnectionEvent{pkt.ts, Ipv4{std::get<0>(rev)}, Ipv4{std::get<1>(rev)},
                                    std::get<2>(rev), Proto::udp, Outcome::established});
      return;
    }
    auto [it, inserted] = udp_flows_.emplace(fwd, UdpFlow{pkt.ts, false});
    if (inserted)
      out.push_back(ConnectionEvent{pkt.ts, pkt.src_ip, pkt.dst_ip, pkt.dst_port, Proto::udp,
                                    Outcome::attempted});
  }

  double handshake_timeout_;
  std::map<TcpKey, TcpFlow> tcp_flows_;
  std::map<UdpKey, UdpFlow> udp_flows_;
  std::multimap<double, TcpKey> pending_;
};

}  // namespace btscan
