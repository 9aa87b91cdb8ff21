#include "sdnguard/flowmeter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>

#include "sdnguard/error.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::flowmeter {
namespace {

constexpr std::string_view kModule = "flowmeter";

// Population statistics via Welford's update; empty summaries report zeros.
struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double min = 0.0;
  double max = 0.0;
  double sum = 0.0;

  void add(double x) {
    if (n == 0) {
      min = max = x;
    } else {
      min = std::min(min, x);
      max = std::max(max, x);
    }
    ++n;
    sum += x;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  double variance() const { return n == 0 ? 0.0 : std::max(0.0, m2 / static_cast<double>(n)); }
  double stddev() const { return std::sqrt(variance()); }
};

struct FlowKey {
  int switch_id;
  FiveTuple tuple;  // canonical orientation
  bool operator==(const FlowKey&) const = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    return FiveTupleHash{}(k.tuple) ^ (static_cast<std::size_t>(k.switch_id) * 0x9e3779b97f4a7c15ULL);
  }
};

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

// Column spellings used by InSDN and CIC-IDS style exports.
constexpr std::pair<std::string_view, std::size_t> kAliases[] = {
    {"Flow Duration", kFlowDuration},
    {"Tot Fwd Pkts", kTotalFwdPackets},
    {"Total Fwd Packets", kTotalFwdPackets},
    {"Tot Bwd Pkts", kTotalBwdPackets},
    {"Total Backward Packets", kTotalBwdPackets},
    {"TotLen Fwd Pkts", kTotalFwdLength},
    {"Total Length of Fwd Packets", kTotalFwdLength},
    {"TotLen Bwd Pkts", kTotalBwdLength},
    {"Total Length of Bwd Packets", kTotalBwdLength},
    {"Fwd Pkt Len Min", kFwdLenMin},
    {"Fwd Pkt Len Max", kFwdLenMax},
    {"Fwd Pkt Len Mean", kFwdLenMean},
    {"Fwd Pkt Len Std", kFwdLenStd},
    {"Bwd Pkt Len Min", kBwdLenMin},
    {"Bwd Pkt Len Max", kBwdLenMax},
    {"Bwd Pkt Len Mean", kBwdLenMean},
    {"Bwd Pkt Len Std", kBwdLenStd},
    {"Flow Byts/s", kFlowBytesPerSec},
    {"Flow Pkts/s", kFlowPacketsPerSec},
    {"Fwd IAT Tot", kFwdIatTotal},
    {"Bwd IAT Tot", kBwdIatTotal},
    {"Fwd Header Len", kFwdHeaderLength},
    {"Bwd Header Len", kBwdHeaderLength},
    {"Fwd Pkts/s", kFwdPacketsPerSec},
    {"Bwd Pkts/s", kBwdPacketsPerSec},
    {"Pkt Len Min", kPktLenMin},
    {"Min Packet Length", kPktLenMin},
    {"Pkt Len Max", kPktLenMax},
    {"Max Packet Length", kPktLenMax},
    {"Pkt Len Mean", kPktLenMean},
    {"Pkt Len Std", kPktLenStd},
    {"Pkt Len Var", kPktLenVariance},
    {"Pkt Size Avg", kAvgPacketSize},
};

double rate_per_second(double amount, Micros duration) {
  return duration > 0 ? amount * 1e6 / static_cast<double>(duration) : 0.0;
}

}  // namespace

std::string FlowRecord::provenance() const {
  return "s" + std::to_string(switch_id) + "-p" + std::to_string(in_port);
}

AssembleResult assemble_flows(std::span<const PacketRecord> records, const Timeouts& timeouts) {
  if (!(timeouts.flow_timeout_s > 0) || !(timeouts.activity_timeout_s > 0)) {
    fail(ErrorKind::Config, kModule, "flow and activity timeouts must be positive");
  }
  const Micros flow_timeout = seconds_to_micros(timeouts.flow_timeout_s);
  AssembleResult result;
  std::unordered_map<FlowKey, std::size_t, FlowKeyHash> open;
  Micros last_ts = std::numeric_limits<Micros>::min();
  for (const auto& r : records) {
    if (r.ts < last_ts) {
      fail(ErrorKind::Ordering, kModule, "packet records are not sorted by timestamp");
    }
    last_ts = r.ts;
    if (r.length == 0 || !is_supported_protocol(r.protocol)) {
      ++result.rejected_rows;
      continue;
    }
    const FiveTuple t = r.tuple();
    const FlowKey key{r.switch_id, std::min(t, t.reversed())};
    auto it = open.find(key);
    if (it != open.end()) {
      auto& flow = result.flows[it->second];
      if (r.ts - flow.last_ts() <= flow_timeout) {
        flow.packets.push_back({r.ts, r.length, t == flow.key});
        continue;
      }
    }
    FlowRecord flow;
    flow.key = t;
    flow.switch_id = r.switch_id;
    flow.in_port = r.in_port;
    flow.packets.push_back({r.ts, r.length, true});
    open[key] = result.flows.size();
    result.flows.push_back(std::move(flow));
  }
  return result;
}

std::uint32_t nominal_header_bytes(std::uint8_t protocol) {
  constexpr std::uint32_t kIpHeader = 20;
  switch (protocol) {
    case kTcp: return kIpHeader + 20;
    case kUdp: return kIpHeader + 8;
    case kIcmp: return kIpHeader + 8;
    default: return kIpHeader;
  }
}

double packet_length_mean(const FlowRecord& flow) {
  Summary s;
  for (const auto& p : flow.packets) s.add(p.length);
  return s.mean;
}

double average_packet_size(const FlowRecord& flow) {
  double bytes = 0;
  for (const auto& p : flow.packets) bytes += p.length;
  return flow.packets.empty() ? 0.0 : bytes / static_cast<double>(flow.packets.size());
}

FeatureVector extract_features(const FlowRecord& flow, double activity_timeout_s) {
  if (flow.packets.empty()) fail(ErrorKind::Validation, kModule, "flow without packets");
  const Micros activity_timeout = seconds_to_micros(activity_timeout_s);

  Summary fwd_len, bwd_len, all_len, flow_iat, fwd_iat, bwd_iat, active, idle;
  std::optional<Micros> prev, prev_fwd, prev_bwd;
  Micros run_start = flow.first_ts();
  for (const auto& p : flow.packets) {
    all_len.add(p.length);
    (p.forward ? fwd_len : bwd_len).add(p.length);
    if (prev) {
      const Micros gap = p.ts - *prev;
      flow_iat.add(static_cast<double>(gap));
      if (gap > activity_timeout) {
        active.add(static_cast<double>(*prev - run_start));
        idle.add(static_cast<double>(gap));
        run_start = p.ts;
      }
    }
    auto& prev_dir = p.forward ? prev_fwd : prev_bwd;
    if (prev_dir) (p.forward ? fwd_iat : bwd_iat).add(static_cast<double>(p.ts - *prev_dir));
    prev_dir = p.ts;
    prev = p.ts;
  }
  active.add(static_cast<double>(flow.last_ts() - run_start));

  const Micros duration = flow.last_ts() - flow.first_ts();
  const double header = nominal_header_bytes(flow.key.protocol);

  FeatureVector fv;
  auto& v = fv.values;
  v[kProtocol] = flow.key.protocol;
  v[kFlowDuration] = static_cast<double>(duration);
  v[kTotalFwdPackets] = static_cast<double>(fwd_len.n);
  v[kTotalBwdPackets] = static_cast<double>(bwd_len.n);
  v[kTotalFwdLength] = fwd_len.sum;
  v[kTotalBwdLength] = bwd_len.sum;
  v[kFwdLenMin] = fwd_len.min;
  v[kFwdLenMax] = fwd_len.max;
  v[kFwdLenMean] = fwd_len.mean;
  v[kFwdLenStd] = fwd_len.stddev();
  v[kBwdLenMin] = bwd_len.min;
  v[kBwdLenMax] = bwd_len.max;
  v[kBwdLenMean] = bwd_len.mean;
  v[kBwdLenStd] = bwd_len.stddev();
  v[kFlowBytesPerSec] = rate_per_second(all_len.sum, duration);
  v[kFlowPacketsPerSec] = rate_per_second(static_cast<double>(all_len.n), duration);
  v[kFlowIatMean] = flow_iat.mean;
  v[kFlowIatStd] = flow_iat.stddev();
  v[kFlowIatMax] = flow_iat.max;
  v[kFlowIatMin] = flow_iat.min;
  v[kFwdIatMin] = fwd_iat.min;
  v[kFwdIatMax] = fwd_iat.max;
  v[kFwdIatMean] = fwd_iat.mean;
  v[kFwdIatStd] = fwd_iat.stddev();
  v[kFwdIatTotal] = fwd_iat.sum;
  v[kBwdIatMin] = bwd_iat.min;
  v[kBwdIatMax] = bwd_iat.max;
  v[kBwdIatMean] = bwd_iat.mean;
  v[kBwdIatStd] = bwd_iat.stddev();
  v[kBwdIatTotal] = bwd_iat.sum;
  v[kFwdHeaderLength] = header * static_cast<double>(fwd_len.n);
  v[kBwdHeaderLength] = header * static_cast<double>(bwd_len.n);
  v[kFwdPacketsPerSec] = rate_per_second(static_cast<double>(fwd_len.n), duration);
  v[kBwdPacketsPerSec] = rate_per_second(static_cast<double>(bwd_len.n), duration);
  v[kPktLenMin] = all_len.min;
  v[kPktLenMax] = all_len.max;
  v[kPktLenMean] = all_len.mean;
  v[kPktLenStd] = all_len.stddev();
  v[kPktLenVariance] = all_len.variance();
  v[kAvgPacketSize] = all_len.sum / static_cast<double>(all_len.n);
  v[kActiveMin] = active.min;
  v[kActiveMean] = active.mean;
  v[kActiveMax] = active.max;
  v[kActiveStd] = active.stddev();
  v[kIdleMin] = idle.min;
  v[kIdleMean] = idle.mean;
  v[kIdleMax] = idle.max;
  v[kIdleStd] = idle.stddev();
  fv.provenance = flow.provenance();
  return fv;
}

std::optional<std::size_t> feature_index(std::string_view column_name) {
  static const std::map<std::string, std::size_t> table = [] {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < kFeatureCount; ++i) m.emplace(normalize_name(kFeatureNames[i]), i);
    for (const auto& [alias, idx] : kAliases) m.emplace(normalize_name(alias), idx);
    return m;
  }();
  auto it = table.find(normalize_name(column_name));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

void write_feature_csv(std::span<const FeatureVector> rows, const std::filesystem::path& path,
                       std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  for (std::size_t i = 0; i < kFeatureCount; ++i) out << kFeatureNames[i] << ',';
  out << "label,provenance\n";
  for (const auto& r : rows) {
    for (double x : r.values) out << format_double(x) << ',';
    out << r.label << ',' << r.provenance << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::flowmeter
