#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btscan/packet.hpp"

namespace btscan {

enum class Provenance : std::uint8_t { http_tracker, udp_tracker, adht, mdht, btudp, pex };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::http_tracker: return "http_tracker";
    case Provenance::udp_tracker: return "udp_tracker";
    case Provenance::adht: return "adht";
    case Provenance::mdht: return "mdht";
    case Provenance::btudp: return "btudp";
    case Provenance::pex: return "pex";
  }
  return "?";
}

struct PredictedPeer {
  Endpoint target;
  Provenance provenance = Provenance::http_tracker;
  double first_seen = 0;
};

struct PeerMapStats {
  std::map<std::string, std::size_t> by_provenance;
  std::map<std::string, std::size_t> by_source;
  std::size_t rejected_port_zero = 0;
  std::size_t total = 0;
};

// Per-source table of predicted (target, port) tuples learned from
// coordination traffic. Entries expire after ttl; each source is capped with
// oldest-first eviction.
class PeerMappings {
 public:
  explicit PeerMappings(double ttl = 1800.0, std::size_t per_source_cap = 50000,
                        bool match_port = true)
      : ttl_(ttl), per_source_cap_(per_source_cap), match_port_(match_port) {}

  void add(Ipv4 source, Endpoint target, Provenance provenance, double first_seen) {
    if (target.port == 0) {
      ++rejected_port_zero_;
      return;
    }
    SourceTable& table = sources_[source.value];
    auto it = table.entries.find(target);
    if (it != table.entries.end()) {
      if (first_seen - it->second.first_seen <= ttl_) return;  // live duplicate, set semantics
      erase_entry(table, it);
    }
    table.entries[target] = Entry{provenance, first_seen};
    table.age.emplace(first_seen, target);
    while (table.entries.size() > per_source_cap_) {
      auto oldest = table.age.begin();
      table.entries.erase(oldest->second);
      table.age.erase(oldest);
    }
  }

  bool is_predicted(Ipv4 source, Ipv4 dst, std::uint16_t dport, double now) const {
    auto sit = sources_.find(source.value);
    if (sit == sources_.end()) return false;
    const SourceTable& table = sit->second;
    if (match_port_) {
      auto it = table.entries.find(Endpoint{dst, dport});
      return it != table.entries.end() && live(it->second, now);
    }
    // ip-only mode: any live entry for dst, regardless of port
    for (auto it = table.entries.lower_bound(Endpoint{dst, 0});
         it != table.entries.end() && it->first.ip == dst; ++it)
      if (live(it->second, now)) return true;
    return false;
  }

  PeerMapStats stats() const {
    PeerMapStats s;
    for (const auto& [src, table] : sources_) {
      s.by_source[Ipv4{src}.str()] = table.entries.size();
      for (const auto& [target, entry] : table.entries)
        ++s.by_provenance[provenance_name(entry.provenance)];
      s.total += table.entries.size();
    }
    s.rejected_port_zero = rejected_port_zero_;
    return s;
  }

  // Audit export: one JSON object per mapping.
  void export_ndjson(std::ostream& out) const {
    for (const auto& [src, table] : sources_) {
      for (const auto& [target, entry] : table.entries) {
        nlohmann::json j;
        j["source"] = Ipv4{src}.str();
        j["target"] = target.ip.str();
        j["port"] = target.port;
        j["provenance"] = provenance_name(entry.provenance);
        j["first_seen"] = entry.first_seen;
        out << j.dump() << '\n';
      }
    }
  }

 private:
  struct Entry {
    Provenance provenance;
    double first_seen;
  };

  struct SourceTable {
    std::map<Endpoint, Entry> entries;
    std::multimap<double, Endpoint> age;
  };

  bool live(const Entry& e, double now) const {
    return now >= e.first_seen && now - e.first_seen <= ttl_;
  }

  static void erase_entry(SourceTable& table, std::map<Endpoint, Entry>::iterator it) {
    auto [lo, hi] = table.age.equal_range(it->second.first_seen);
    for (auto a = lo; a != hi; ++a) {
      if (a->second == it->first) {
        table.age.erase(a);
        break;
      }
    }
    table.entries.erase(it);
  }

  double ttl_;
  std::size_t per_source_cap_;
  bool match_port_;
  std::map<std::uint32_t, SourceTable> sources_;
  std::size_t rejected_port_zero_ = 0;
};

}  // namespace btscan
