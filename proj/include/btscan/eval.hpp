#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "btscan/pipeline.hpp"
#include "btscan/synth.hpp"

namespace btscan {

enum class EvalMode : std::uint8_t { baseline, predicted, predicted_ppr };

inline const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::baseline: return "baseline";
    case EvalMode::predicted: return "predicted";
    case EvalMode::predicted_ppr: return "predicted+ppr";
  }
  return "?";
}

inline PipelineConfig apply_mode(PipelineConfig cfg, EvalMode mode) {
  cfg.detector.suppress_predicted = mode != EvalMode::baseline;
  cfg.detector.suppress_ppr = mode == EvalMode::predicted_ppr;
  return cfg;
}

inline bool is_scanner(HostKind k) {
  return k == HostKind::horizontal_scanner || k == HostKind::vertical_scanner ||
         k == HostKind::hybrid_scanner;
}

// Full pipeline over a labeled trace; returns the set of flagged sources
// (sources with at least one AddressScan alarm).
inline std::set<std::uint32_t> run_experiment(const LabeledTrace& trace, PipelineConfig cfg,
                                              EvalMode mode) {
  AnalysisResult res = analyze_packets(trace.packets, apply_mode(std::move(cfg), mode));
  std::set<std::uint32_t> flagged;
  for (const auto& src : res.flagged) flagged.insert(src.value);
  return flagged;
}

struct RocPoint {
  std::string mode;
  std::size_t threshold = 0;
  double tpr = 0;  // fraction of labeled scanners flagged
  double fpr = 0;  // fraction of labeled BitTorrent hosts flagged
};

inline const std::vector<std::size_t>& default_threshold_ladder() {
  static const std::vector<std::size_t> ladder = {5, 10, 20, 50, 100, 200, 500, 1000};
  return ladder;
}

// One point per (mode, threshold). Each point is a single-threshold run:
// report_thresholds = {T} and shutdown at T so the AddressScan always has a
// chance to fire before the source is silenced.
inline std::vector<RocPoint> roc_points(const LabeledTrace& trace, const PipelineConfig& cfg,
                                        const std::vector<std::size_t>& thresholds,
                                        const std::vector<EvalMode>& modes = {
                                            EvalMode::baseline, EvalMode::predicted,
                                            EvalMode::predicted_ppr}) {
  std::size_t scanners = 0, bt_hosts = 0;
  for (const auto& [src, kind] : trace.labels) {
    if (is_scanner(kind)) ++scanners;
    if (kind == HostKind::bittorrent) ++bt_hosts;
  }
  std::vector<RocPoint> out;
  for (EvalMode mode : modes) {
    for (std::size_t threshold : thresholds) {
      PipelineConfig run_cfg = cfg;
      run_cfg.detector.report_thresholds = {threshold};
      run_cfg.detector.shutdown_threshold = threshold;
      auto flagged = run_experiment(trace, run_cfg, mode);
      std::size_t tp = 0, fp = 0;
      for (std::uint32_t src : flagged) {
        auto it = trace.labels.find(src);
        if (it == trace.labels.end()) continue;
        if (is_scanner(it->second)) ++tp;
        if (it->second == HostKind::bittorrent) ++fp;
      }
      RocPoint pt;
      pt.mode = eval_mode_name(mode);
      pt.threshold = threshold;
      pt.tpr = scanners ? static_cast<double>(tp) / static_cast<double>(scanners) : 0.0;
      pt.fpr = bt_hosts ? static_cast<double>(fp) / static_cast<double>(bt_hosts) : 0.0;
      out.push_back(std::move(pt));
    }
  }
  return out;
}

inline void write_roc_csv(std::ostream& os, const std::vector<RocPoint>& points) {
  os << "mode,threshold,tpr,fpr\n";
  for (const auto& pt : points)
    os << pt.mode << ',' << pt.threshold << ',' << pt.tpr << ',' << pt.fpr << '\n';
}

// For each source flagged in baseline mode, the time from its first packet to
// its k-th predicted connection occurring before the flag instant; sources
// with fewer than k predicted connections before the flag are excluded.
// Returned as counts per `bin`-second bucket of duration.
inline std::map<std::size_t, std::size_t> predicted_duration_histogram(
    const LabeledTrace& trace, const PipelineConfig& cfg, std::size_t k = 100,
    double bin = 900.0) {
  AnalysisResult res = analyze_packets(trace.packets, apply_mode(cfg, EvalMode::baseline));

  std::map<std::uint32_t, double> flag_time;  // first AddressScan per source
  for (const auto& alarm : res.alarms) {
    if (alarm.kind != AlarmKind::AddressScan) continue;
    auto [it, inserted] = flag_time.emplace(alarm.source.value, alarm.ts);
    if (!inserted && alarm.ts < it->second) it->second = alarm.ts;
  }

  // predicted-connection timestamps per flagged source
  std::map<std::uint32_t, std::vector<double>> predicted_ts;
  for (const auto& ann : res.events) {
    if (!ann.predicted) continue;
    auto it = flag_time.find(ann.event.initiator.value);
    if (it == flag_time.end() || ann.event.ts > it->second) continue;
    predicted_ts[ann.event.initiator.value].push_back(ann.event.ts);
  }

  std::map<std::size_t, std::size_t> histogram;
  for (auto& [src, times] : predicted_ts) {
    if (times.size() < k) continue;
    std::sort(times.begin(), times.end());
    double kth = times[k - 1];
    auto first = res.first_packet.find(src);
    double duration = kth - (first != res.first_packet.end() ? first->second : kth);
    ++histogram[static_cast<std::size_t>(duration / bin)];
  }
  return histogram;
}

inline void write_histogram_csv(std::ostream& os,
                                const std::map<std::size_t, std::size_t>& histogram,
                                double bin = 900.0) {
  os << "bin_start_seconds,count\n";
  for (const auto& [idx, count] : histogram)
    os << static_cast<double>(idx) * bin << ',' << count << '\n';
}

struct FlagBreakdown {
  std::size_t total_flags_baseline = 0;
  std::size_t suppressed = 0;
  std::size_t residual_flags = 0;
  std::size_t residual_true = 0;   // residual flags on labeled scanners
  std::size_t residual_false = 0;  // residual flags on everything else
};

inline FlagBreakdown flag_breakdown(const LabeledTrace& trace, const PipelineConfig& cfg,
                                    EvalMode suppressed_mode = EvalMode::predicted) {
  auto baseline = run_experiment(trace, cfg, EvalMode::baseline);
  auto residual = run_experiment(trace, cfg, suppressed_mode);
  FlagBreakdown out;
  out.total_flags_baseline = baseline.size();
  out.residual_flags = residual.size();
  out.suppressed = baseline.size() - std::min(baseline.size(), residual.size());
  for (std::uint32_t src : residual) {
    auto it = trace.labels.find(src);
    if (it != trace.labels.end() && is_scanner(it->second))
      ++out.residual_true;
    else
      ++out.residual_false;
  }
  return out;
}

inline nlohmann::json breakdown_json(const FlagBreakdown& b) {
  return nlohmann::json{{"total_flags_baseline", b.total_flags_baseline},
                        {"suppressed", b.suppressed},
                        {"residual_flags", b.residual_flags},
                        {"residual_true", b.residual_true},
                        {"residual_false", b.residual_false}};
}

}  // namespace btscan
