// btscan: BitTorrent-aware port-scan analysis toolkit.
//
// Subcommands:
//   analyze  run the detector over a pcap/NDJSON trace, write alarm logs,
//            suppression log, peer-map export, and a summary JSON
//   synth    generate a labeled synthetic trace (scanners + BitTorrent hosts)
//   roc      threshold sweep across baseline / predicted / predicted+ppr
//   hist     predicted-connection duration histogram
//
// Exit codes: 0 success, 2 I/O error, 64 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "btscan/eval.hpp"
#include "btscan/ndjson.hpp"
#include "btscan/pcap.hpp"
#include "btscan/pipeline.hpp"
#include "btscan/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// write-then-rename so readers never see partial files
void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<btscan::PacketRecord> load_trace(const std::string& path, const std::string& format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input: " + path);

  std::string effective = format;
  if (effective == "auto") {
    unsigned char magic[4] = {0, 0, 0, 0};
    in.read(reinterpret_cast<char*>(magic), 4);
    in.clear();
    in.seekg(0);
    bool pcap_magic = (magic[0] == 0xa1 && magic[1] == 0xb2 && magic[2] == 0xc3 &&
                       magic[3] == 0xd4) ||
                      (magic[0] == 0xd4 && magic[1] == 0xc3 && magic[2] == 0xb2 &&
                       magic[3] == 0xa1);
    if (pcap_magic)
      effective = "pcap";
    else if (magic[0] == '{')
      effective = "ndjson";
    else
      throw ConfigError("cannot auto-detect input format of " + path +
                        " (neither pcap magic nor NDJSON); pass --format");
  }
  if (effective == "pcap") {
    btscan::PcapReadStats stats;
    auto packets = btscan::read_pcap(in, &stats);
    if (stats.truncated) std::cerr << "warning: truncated pcap record, partial trace\n";
    return packets;
  }
  std::vector<btscan::NdjsonLineError> errors;
  auto packets = btscan::read_ndjson(in, &errors);
  for (const auto& err : errors)
    std::cerr << "warning: " << path << ":" << err.line << ": " << err.message << '\n';
  return packets;
}

std::map<std::uint32_t, btscan::HostKind> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels: " + path);
  std::map<std::uint32_t, btscan::HostKind> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("source") || !j.contains("kind"))
      throw ConfigError("bad label line " + std::to_string(lineno) + " in " + path);
    auto ip = btscan::Ipv4::parse(j["source"].get<std::string>());
    auto kind = btscan::parse_host_kind(j["kind"].get<std::string>());
    if (!ip || !kind)
      throw ConfigError("bad label line " + std::to_string(lineno) + " in " + path);
    labels[ip->value] = *kind;
  }
  return labels;
}

std::string labels_ndjson(const std::map<std::uint32_t, btscan::HostKind>& labels) {
  std::ostringstream os;
  for (const auto& [src, kind] : labels) {
    nlohmann::json j;
    j["source"] = btscan::Ipv4{src}.str();
    j["kind"] = btscan::host_kind_name(kind);
    os << j.dump() << '\n';
  }
  return os.str();
}

struct CommonOpts {
  std::string input;
  std::string format = "auto";
  std::string labels_path;
  std::string out_dir = ".";
  std::string signatures_path;
  std::size_t threshold = 100;
  double window = 900.0;
  std::size_t shutdown = 100;
  double ppr_lower = 0.75;
  double ppr_upper = 1.0;
  bool no_predicted = false;
  bool no_ppr = false;
  std::string analyzers = "http_tracker,udp_tracker,adht,mdht,btudp,pex";
  std::uint64_t seed = 20120901;
  std::size_t scanners = 51;
  std::size_t bt_hosts = 49;
  std::size_t hist_k = 100;
  double hist_bin = 900.0;
  std::vector<std::size_t> ladder;  // empty: default
};

btscan::PipelineConfig make_pipeline_config(const CommonOpts& opts) {
  btscan::PipelineConfig cfg;
  cfg.detector.report_thresholds = {opts.threshold};
  cfg.detector.window = opts.window;
  cfg.detector.shutdown_threshold = opts.shutdown;
  cfg.detector.ppr_lower = opts.ppr_lower;
  cfg.detector.ppr_upper = opts.ppr_upper;
  cfg.detector.suppress_predicted = !opts.no_predicted;
  cfg.detector.suppress_ppr = !opts.no_ppr;
  if (opts.ppr_lower <= 0 || opts.ppr_lower > opts.ppr_upper)
    throw ConfigError("require 0 < ppr-lower <= ppr-upper");

  cfg.analyzers = btscan::AnalyzerSet{false, false, false, false, false, false};
  std::stringstream names(opts.analyzers);
  std::string name;
  while (std::getline(names, name, ',')) {
    if (name == "http_tracker") cfg.analyzers.http_tracker = true;
    else if (name == "udp_tracker") cfg.analyzers.udp_tracker = true;
    else if (name == "adht") cfg.analyzers.adht = true;
    else if (name == "mdht") cfg.analyzers.mdht = true;
    else if (name == "btudp") cfg.analyzers.btudp = true;
    else if (name == "pex") cfg.analyzers.pex = true;
    else throw ConfigError("unknown analyzer: " + name);
  }

  if (!opts.signatures_path.empty()) {
    std::ifstream in(opts.signatures_path);
    if (!in) throw IoError("cannot open signatures: " + opts.signatures_path);
    std::vector<btscan::SignatureLineError> errors;
    cfg.signatures = btscan::load_signatures(in, &errors);
    for (const auto& err : errors)
      std::cerr << "warning: " << opts.signatures_path << ":" << err.line << ": " << err.message
                << '\n';
  }
  return cfg;
}

btscan::LabeledTrace obtain_labeled_trace(const CommonOpts& opts) {
  if (opts.input.empty()) {
    btscan::ExperimentConfig ecfg;
    ecfg.scanner_count = opts.scanners;
    ecfg.bt_host_count = opts.bt_hosts;
    ecfg.seed = opts.seed;
    return btscan::default_experiment(ecfg);
  }
  btscan::LabeledTrace trace;
  trace.packets = load_trace(opts.input, opts.format);
  if (opts.labels_path.empty())
    throw ConfigError("--labels is required when --input is given");
  trace.labels = load_labels(opts.labels_path);
  return trace;
}

int cmd_analyze(const CommonOpts& opts) {
  if (opts.input.empty()) throw ConfigError("analyze requires --input");
  auto cfg = make_pipeline_config(opts);
  auto packets = load_trace(opts.input, opts.format);

  btscan::Pipeline pipeline(cfg);
  for (const auto& pkt : packets) pipeline.process(pkt);
  std::ostringstream peermap_os;
  pipeline.peermap().export_ndjson(peermap_os);
  auto res = pipeline.finish();

  std::ostringstream alarms_os, suppression_os;
  std::map<std::string, std::size_t> alarm_counts;
  for (const auto& alarm : res.alarms) {
    ++alarm_counts[btscan::alarm_kind_name(alarm.kind)];
    (btscan::is_suppression(alarm.kind) ? suppression_os : alarms_os)
        << alarm.log_line() << '\n';
  }

  nlohmann::json summary;
  summary["alarms"] = alarm_counts;
  summary["flagged_sources"] = nlohmann::json::array();
  for (const auto& src : res.flagged) summary["flagged_sources"].push_back(src.str());
  summary["peer_mappings"] = {{"total", res.peermap_stats.total},
                              {"by_provenance", res.peermap_stats.by_provenance},
                              {"rejected_port_zero", res.peermap_stats.rejected_port_zero}};
  summary["packets"] = packets.size();
  summary["events"] = res.events.size();

  std::filesystem::path out(opts.out_dir);
  std::filesystem::create_directories(out);
  write_atomic(out / "alarms.log", alarms_os.str());
  write_atomic(out / "suppressions.log", suppression_os.str());
  write_atomic(out / "peermap.ndjson", peermap_os.str());
  write_atomic(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_synth(const CommonOpts& opts) {
  btscan::ExperimentConfig ecfg;
  ecfg.scanner_count = opts.scanners;
  ecfg.bt_host_count = opts.bt_hosts;
  ecfg.seed = opts.seed;
  auto trace = btscan::default_experiment(ecfg);

  std::filesystem::path out(opts.out_dir);
  std::filesystem::create_directories(out);
  if (opts.format == "pcap") {
    std::ostringstream os(std::ios::binary);
    btscan::write_pcap_header(os);
    for (const auto& pkt : trace.packets) btscan::write_pcap_record(os, pkt);
    write_atomic(out / "trace.pcap", os.str());
  } else {
    std::ostringstream os;
    btscan::write_ndjson(os, trace.packets);
    write_atomic(out / "trace.ndjson", os.str());
  }
  write_atomic(out / "labels.ndjson", labels_ndjson(trace.labels));
  std::cout << "wrote " << trace.packets.size() << " packets, " << trace.labels.size()
            << " labeled sources\n";
  return kExitOk;
}

int cmd_roc(const CommonOpts& opts) {
  auto cfg = make_pipeline_config(opts);
  auto trace = obtain_labeled_trace(opts);
  const auto& ladder = opts.ladder.empty() ? btscan::default_threshold_ladder() : opts.ladder;
  auto points = btscan::roc_points(trace, cfg, ladder);

  std::ostringstream os;
  btscan::write_roc_csv(os, points);
  std::filesystem::path out(opts.out_dir);
  std::filesystem::create_directories(out);
  write_atomic(out / "roc.csv", os.str());
  std::cout << os.str();
  return kExitOk;
}

int cmd_hist(const CommonOpts& opts) {
  auto cfg = make_pipeline_config(opts);
  auto trace = obtain_labeled_trace(opts);
  auto histogram = btscan::predicted_duration_histogram(trace, cfg, opts.hist_k, opts.hist_bin);

  std::ostringstream os;
  btscan::write_histogram_csv(os, histogram, opts.hist_bin);
  std::filesystem::path out(opts.out_dir);
  std::filesystem::create_directories(out);
  write_atomic(out / "histogram.csv", os.str());
  std::cout << os.str();
  return kExitOk;
}

void add_detector_flags(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--threshold", opts.threshold, "AddressScan threshold (distinct failed hosts)");
  cmd->add_option("--window", opts.window, "Sliding window in seconds");
  cmd->add_option("--shutdown", opts.shutdown, "Shutdown threshold");
  cmd->add_option("--ppr-lower", opts.ppr_lower, "Lower PPR suppression bound");
  cmd->add_option("--ppr-upper", opts.ppr_upper, "Upper PPR suppression bound");
  cmd->add_flag("--no-predicted", opts.no_predicted, "Disable predicted-connection suppression");
  cmd->add_flag("--no-ppr", opts.no_ppr, "Disable PPR suppression");
  cmd->add_option("--analyzers", opts.analyzers, "Comma list of enabled analyzers");
  cmd->add_option("--signatures", opts.signatures_path, "BTUDP signature config file");
}

void add_input_flags(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--input", opts.input, "Input trace (pcap or NDJSON)");
  cmd->add_option("--format", opts.format, "Input format: pcap|ndjson|auto")
      ->check(CLI::IsMember({"pcap", "ndjson", "auto"}));
  cmd->add_option("--labels", opts.labels_path, "Labels NDJSON for --input traces");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BitTorrent-aware port-scan traffic analyzer"};
  app.require_subcommand(1);
  CommonOpts opts;

  auto* analyze = app.add_subcommand("analyze", "Run the detector over a trace");
  add_input_flags(analyze, opts);
  add_detector_flags(analyze, opts);
  analyze->add_option("--out", opts.out_dir, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic trace");
  synth->add_option("--scanners", opts.scanners, "Scanner population");
  synth->add_option("--bt-hosts", opts.bt_hosts, "BitTorrent host population");
  synth->add_option("--seed", opts.seed, "Generator seed");
  synth->add_option("--format", opts.format, "Output format: ndjson|pcap")
      ->check(CLI::IsMember({"ndjson", "pcap", "auto"}));
  synth->add_option("--out", opts.out_dir, "Output directory");

  auto* roc = app.add_subcommand("roc", "Threshold sweep over the three modes");
  add_input_flags(roc, opts);
  add_detector_flags(roc, opts);
  roc->add_option("--thresholds", opts.ladder, "Threshold ladder (default 5..1000)");
  roc->add_option("--scanners", opts.scanners, "Scanner population (generated runs)");
  roc->add_option("--bt-hosts", opts.bt_hosts, "BitTorrent host population (generated runs)");
  roc->add_option("--seed", opts.seed, "Generator seed (generated runs)");
  roc->add_option("--out", opts.out_dir, "Output directory");

  auto* hist = app.add_subcommand("hist", "Predicted-connection duration histogram");
  add_input_flags(hist, opts);
  add_detector_flags(hist, opts);
  hist->add_option("--k", opts.hist_k, "Predicted connections counted before flag");
  hist->add_option("--bin", opts.hist_bin, "Histogram bin width in seconds");
  hist->add_option("--scanners", opts.scanners, "Scanner population (generated runs)");
  hist->add_option("--bt-hosts", opts.bt_hosts, "BitTorrent host population (generated runs)");
  hist->add_option("--seed", opts.seed, "Generator seed (generated runs)");
  hist->add_option("--out", opts.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(opts);
    if (synth->parsed()) return cmd_synth(opts);
    if (roc->parsed()) return cmd_roc(opts);
    if (hist->parsed()) return cmd_hist(opts);
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const btscan::UnsupportedFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
