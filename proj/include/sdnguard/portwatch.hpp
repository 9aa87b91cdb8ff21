#pragma once

// Per-switch windowed port counters and the coarse detector that compares
// the inflow/PacketIn and forwarded/inflow ratios against calibrated
// lower-quantile thresholds.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdnguard/simnet.hpp"

namespace sdnguard::portwatch {

struct PortWindowStats {
  int switch_id = 0;
  std::int64_t window_index = 0;
  double window_length = 1.0;  // seconds
  std::uint64_t num_flow_in = 0;
  std::uint64_t num_flow_out = 0;
  std::uint64_t num_packet_in = 0;
  /// Attribution metadata: PacketIn messages raised per ingress port.
  std::map<int, std::uint64_t> packet_in_by_port;

  Micros window_micros() const;
  Micros begin() const { return window_index * window_micros(); }
  Micros end() const { return begin() + window_micros(); }
};

struct RatioPair {
  double rate_packet_in = 0.0;
  double rate_flow_io = 0.0;
  /// Zero denominators; the corresponding value is meaningless and the
  /// ratio counts as above any threshold.
  bool packet_in_saturated = false;
  bool flow_io_saturated = false;

  bool saturated() const { return packet_in_saturated || flow_io_saturated; }
};

struct Thresholds {
  double packet_in_threshold = 0.0;
  double flow_io_threshold = 0.0;
  double quantile = 0.0;
  std::size_t samples = 0;
  std::size_t excluded_packet_in = 0;
  std::size_t excluded_flow_io = 0;
  bool calibrated = false;
};

enum class Verdict { Normal, Abnormal };
std::string_view to_string(Verdict v);

/// Adds one counter event to its window. Events must lie in
/// [begin, end) of the window and belong to its switch.
PortWindowStats accumulate(PortWindowStats window, const simnet::CounterEvent& event);

RatioPair compute_ratios(const PortWindowStats& stats);

Verdict judge(const RatioPair& ratios, const Thresholds& thresholds);

/// Lower `quantile` of each ratio over `normal_windows` (saturated or
/// non-finite entries are excluded and counted). Needs at least
/// kMinCalibrationWindows usable samples per ratio.
Thresholds calibrate_thresholds(std::span<const RatioPair> normal_windows, double quantile = 0.01);

inline constexpr std::size_t kMinCalibrationWindows = 30;

/// Requires `k` consecutive raw Abnormal verdicts per switch before
/// reporting Abnormal. k = 1 passes verdicts through unchanged.
class Debouncer {
 public:
  explicit Debouncer(int k = 1);
  Verdict push(int switch_id, Verdict raw);

 private:
  int k_;
  std::map<int, int> streak_;
};

/// Folds a time-ordered counter event stream into per-switch windows. Every
/// known switch gets a (possibly empty) window for every elapsed interval.
class WindowAccumulator {
 public:
  WindowAccumulator(std::vector<int> switch_ids, Micros window);

  /// Closes windows ending at or before the event, then accumulates it.
  /// Out-of-order events are an ordering error.
  void add(const simnet::CounterEvent& event, std::vector<PortWindowStats>& closed);
  /// Closes every window whose end is <= t.
  void advance_to(Micros t, std::vector<PortWindowStats>& closed);

  std::int64_t current_window() const { return current_; }

 private:
  std::vector<int> switch_ids_;
  Micros window_;
  std::int64_t current_ = 0;
  Micros last_ts_ = 0;
  std::map<int, PortWindowStats> open_;
};

struct WindowReport {
  PortWindowStats stats;
  RatioPair ratios;
  Verdict verdict = Verdict::Normal;
};

void write_window_csv(std::span<const WindowReport> rows, const std::filesystem::path& path,
                      std::span<const std::string> preamble = {});
std::vector<PortWindowStats> read_window_csv(const std::filesystem::path& path);

void save_thresholds(const Thresholds& t, const std::filesystem::path& path,
                     std::span<const std::string> preamble = {});
Thresholds load_thresholds(const std::filesystem::path& path);

}  // namespace sdnguard::portwatch
