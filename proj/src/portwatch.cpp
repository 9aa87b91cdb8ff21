#include "sdnguard/portwatch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdnguard/error.hpp"
#include "sdnguard/kvconfig.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::portwatch {
namespace {

constexpr std::string_view kModule = "portwatch";
constexpr std::string_view kWindowHeader =
    "window_index,switch_id,num_flow_in,num_flow_out,num_packet_in,rate_packet_in,rate_flow_io,verdict";

double lower_quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  return values[idx];
}

}  // namespace

std::string_view to_string(Verdict v) { return v == Verdict::Abnormal ? "abnormal" : "normal"; }

Micros PortWindowStats::window_micros() const { return seconds_to_micros(window_length); }

PortWindowStats accumulate(PortWindowStats window, const simnet::CounterEvent& event) {
  if (!(window.window_length > 0)) {
    fail(ErrorKind::Config, kModule, "window length must be positive");
  }
  if (event.switch_id != window.switch_id || event.ts < window.begin() || event.ts >= window.end()) {
    fail(ErrorKind::Window, kModule,
         "event at t=" + std::to_string(event.ts) + "us on switch " +
             std::to_string(event.switch_id) + " does not belong to window " +
             std::to_string(window.window_index) + " of switch " + std::to_string(window.switch_id));
  }
  switch (event.kind) {
    case simnet::CounterKind::FlowIn: ++window.num_flow_in; break;
    case simnet::CounterKind::FlowOut: ++window.num_flow_out; break;
    case simnet::CounterKind::PacketIn:
      ++window.num_packet_in;
      ++window.packet_in_by_port[event.port];
      break;
  }
  return window;
}

RatioPair compute_ratios(const PortWindowStats& s) {
  RatioPair r;
  if (s.num_packet_in == 0) {
    r.packet_in_saturated = true;
  } else {
    r.rate_packet_in = static_cast<double>(s.num_flow_in) / static_cast<double>(s.num_packet_in);
  }
  if (s.num_flow_in == 0) {
    r.flow_io_saturated = true;
  } else {
    r.rate_flow_io = static_cast<double>(s.num_flow_out) / static_cast<double>(s.num_flow_in);
  }
  return r;
}

Verdict judge(const RatioPair& r, const Thresholds& t) {
  if (!t.calibrated) fail(ErrorKind::Config, kModule, "thresholds are not calibrated");
  if (r.saturated()) return Verdict::Normal;
  return r.rate_packet_in < t.packet_in_threshold && r.rate_flow_io < t.flow_io_threshold
             ? Verdict::Abnormal
             : Verdict::Normal;
}

Thresholds calibrate_thresholds(std::span<const RatioPair> normal_windows, double quantile) {
  if (!(quantile > 0.0 && quantile < 0.5)) {
    fail(ErrorKind::Config, kModule, "quantile must lie in (0, 0.5)");
  }
  std::vector<double> packet_in, flow_io;
  Thresholds t;
  for (const auto& r : normal_windows) {
    if (!r.packet_in_saturated && std::isfinite(r.rate_packet_in)) {
      packet_in.push_back(r.rate_packet_in);
    } else {
      ++t.excluded_packet_in;
    }
    if (!r.flow_io_saturated && std::isfinite(r.rate_flow_io)) {
      flow_io.push_back(r.rate_flow_io);
    } else {
      ++t.excluded_flow_io;
    }
  }
  const auto usable = std::min(packet_in.size(), flow_io.size());
  if (usable < kMinCalibrationWindows) {
    fail(ErrorKind::Calibration, kModule,
         "need at least " + std::to_string(kMinCalibrationWindows) + " usable normal windows, got " +
             std::to_string(usable) + " (excluded: " + std::to_string(t.excluded_packet_in) + " / " +
             std::to_string(t.excluded_flow_io) + ")");
  }
  t.packet_in_threshold = lower_quantile(std::move(packet_in), quantile);
  t.flow_io_threshold = lower_quantile(std::move(flow_io), quantile);
  if (!(t.packet_in_threshold > 0 && t.flow_io_threshold > 0)) {
    fail(ErrorKind::Calibration, kModule, "calibrated thresholds must be positive");
  }
  t.quantile = quantile;
  t.samples = normal_windows.size();
  t.calibrated = true;
  return t;
}

Debouncer::Debouncer(int k) : k_(k) {
  if (k < 1) fail(ErrorKind::Config, kModule, "debounce length must be >= 1");
}

Verdict Debouncer::push(int switch_id, Verdict raw) {
  int& streak = streak_[switch_id];
  streak = raw == Verdict::Abnormal ? streak + 1 : 0;
  return streak >= k_ ? Verdict::Abnormal : Verdict::Normal;
}

WindowAccumulator::WindowAccumulator(std::vector<int> switch_ids, Micros window)
    : switch_ids_(std::move(switch_ids)), window_(window) {
  if (window_ <= 0) fail(ErrorKind::Config, kModule, "window length must be positive");
  for (int id : switch_ids_) {
    PortWindowStats s;
    s.switch_id = id;
    s.window_length = static_cast<double>(window_) / kMicrosPerSecond;
    open_[id] = s;
  }
}

void WindowAccumulator::advance_to(Micros t, std::vector<PortWindowStats>& closed) {
  while ((current_ + 1) * window_ <= t) {
    for (int id : switch_ids_) {
      auto& s = open_[id];
      closed.push_back(s);
      s = PortWindowStats{};
      s.switch_id = id;
      s.window_index = current_ + 1;
      s.window_length = static_cast<double>(window_) / kMicrosPerSecond;
    }
    ++current_;
  }
}

void WindowAccumulator::add(const simnet::CounterEvent& event, std::vector<PortWindowStats>& closed) {
  if (event.ts < last_ts_) {
    fail(ErrorKind::Ordering, kModule, "counter events must arrive in time order");
  }
  last_ts_ = event.ts;
  advance_to(event.ts, closed);
  auto it = open_.find(event.switch_id);
  if (it == open_.end()) {
    fail(ErrorKind::Window, kModule, "event for unknown switch " + std::to_string(event.switch_id));
  }
  it->second = accumulate(std::move(it->second), event);
}

void write_window_csv(std::span<const WindowReport> rows, const std::filesystem::path& path,
                      std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << kWindowHeader << '\n';
  for (const auto& r : rows) {
    out << r.stats.window_index << ',' << r.stats.switch_id << ',' << r.stats.num_flow_in << ','
        << r.stats.num_flow_out << ',' << r.stats.num_packet_in << ','
        << (r.ratios.packet_in_saturated ? "saturated" : format_double(r.ratios.rate_packet_in)) << ','
        << (r.ratios.flow_io_saturated ? "saturated" : format_double(r.ratios.rate_flow_io)) << ','
        << to_string(r.verdict) << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

std::vector<PortWindowStats> read_window_csv(const std::filesystem::path& path) {
  auto in = open_input(path, kModule);
  std::string line;
  bool header = false;
  std::vector<PortWindowStats> out;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (trim_view(line) != kWindowHeader) {
        fail(ErrorKind::Validation, kModule, "unexpected window CSV header in " + path.string());
      }
      header = true;
      continue;
    }
    auto f = split(trim_view(line), ',');
    if (f.size() != 8) fail(ErrorKind::Validation, kModule, "malformed window row: " + line);
    auto num = [&](std::string_view s) {
      auto v = parse_double(s);
      if (!v || *v < 0) fail(ErrorKind::Validation, kModule, "malformed window row: " + line);
      return static_cast<std::uint64_t>(*v);
    };
    PortWindowStats s;
    s.window_index = static_cast<std::int64_t>(num(f[0]));
    s.switch_id = static_cast<int>(num(f[1]));
    s.num_flow_in = num(f[2]);
    s.num_flow_out = num(f[3]);
    s.num_packet_in = num(f[4]);
    out.push_back(s);
  }
  if (!header) fail(ErrorKind::Validation, kModule, "missing window CSV header in " + path.string());
  return out;
}

void save_thresholds(const Thresholds& t, const std::filesystem::path& path,
                     std::span<const std::string> preamble) {
  if (!t.calibrated) fail(ErrorKind::Config, kModule, "refusing to save uncalibrated thresholds");
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "packet_in_threshold = " << format_double(t.packet_in_threshold) << '\n'
      << "flow_io_threshold = " << format_double(t.flow_io_threshold) << '\n'
      << "quantile = " << format_double(t.quantile) << '\n'
      << "samples = " << t.samples << '\n'
      << "excluded_packet_in = " << t.excluded_packet_in << '\n'
      << "excluded_flow_io = " << t.excluded_flow_io << '\n';
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

Thresholds load_thresholds(const std::filesystem::path& path) {
  auto cfg = KvConfig::load(path);
  Thresholds t;
  if (!cfg.contains("packet_in_threshold") || !cfg.contains("flow_io_threshold")) {
    fail(ErrorKind::Config, kModule, "threshold file lacks thresholds: " + path.string());
  }
  t.packet_in_threshold = cfg.get_double("packet_in_threshold", 0);
  t.flow_io_threshold = cfg.get_double("flow_io_threshold", 0);
  t.quantile = cfg.get_double("quantile", 0);
  t.samples = static_cast<std::size_t>(cfg.get_int("samples", 0));
  t.excluded_packet_in = static_cast<std::size_t>(cfg.get_int("excluded_packet_in", 0));
  t.excluded_flow_io = static_cast<std::size_t>(cfg.get_int("excluded_flow_io", 0));
  cfg.require_all_used();
  if (!(t.packet_in_threshold > 0 && t.flow_io_threshold > 0)) {
    fail(ErrorKind::Config, kModule, "thresholds must be positive");
  }
  t.calibrated = true;
  return t;
}

}  // namespace sdnguard::portwatch
