#pragma once

// Glue shared by the command-line tool and the acceptance runs: scenario
// setup from config, threshold calibration, the coarse-detection replay,
// synthetic labelled flow datasets, and the hierarchical end-to-end chain.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "sdnguard/dataprep.hpp"
#include "sdnguard/kvconfig.hpp"
#include "sdnguard/mfdlc.hpp"
#include "sdnguard/mitigation.hpp"
#include "sdnguard/portwatch.hpp"
#include "sdnguard/simnet.hpp"

namespace sdnguard::pipeline {

struct Scenario {
  simnet::Topology topology;
  simnet::SimConfig sim;
  std::vector<simnet::AttackSpec> attacks;

  /// Reads the `topology.*`, `sim.*` and `attack.*` keys.
  static Scenario from(const KvConfig& cfg);
  simnet::Simulator make_simulator(std::uint64_t seed, bool with_attacks = true) const;
  /// Switch and port each attacker is attached to.
  std::vector<std::pair<int, int>> attack_points() const;
  bool is_attacker(Ipv4 address) const;
};

/// Windows starting before the warm-up has finished are not representative
/// of steady-state traffic and are left out of calibration.
std::int64_t first_steady_window(const simnet::SimConfig& sim);

/// Attack-free replay of `duration`; thresholds from the lower quantile of
/// every steady-state (switch, window) ratio pair.
portwatch::Thresholds calibrate(const Scenario& scenario, std::uint64_t seed, Micros duration,
                                double quantile = 0.01);

struct CoarseSummary {
  std::size_t windows = 0;
  std::size_t attack_windows = 0;    // attacked switch, attack on
  std::size_t detected_windows = 0;  // of those, flagged
  std::size_t other_windows = 0;     // non-attacked switches
  std::size_t other_flags = 0;
  std::size_t idle_windows = 0;  // every window without attack activity at its switch
  std::size_t idle_flags = 0;
  std::size_t bursts = 0;
  std::size_t detected_bursts = 0;
  std::size_t localized_bursts = 0;
  std::vector<int> attacked_switches;

  std::optional<double> recall() const;
  std::optional<double> false_flag_rate() const;  // non-attacked switches
  std::optional<double> false_positive_rate() const;  // all idle windows
  bool localization_ok() const { return detected_bursts == localized_bursts; }
};

struct CoarseRun {
  std::vector<portwatch::WindowReport> reports;
  CoarseSummary summary;
};

/// Replays the scenario with attacks and judges every closed window.
CoarseRun run_coarse(const Scenario& scenario, const portwatch::Thresholds& thresholds, std::uint64_t seed,
                     Micros duration);

struct SyntheticOptions {
  Micros duration = 400 * kMicrosPerSecond;
  std::size_t per_class = 1000;
};

inline constexpr std::string_view kNormalLabel = "Normal";
inline constexpr std::string_view kAttackLabel = "Attack";

/// Labelled flow features from one replay: flows sourced by an attacker are
/// "Attack", the rest "Normal"; `per_class` of each are drawn at random.
/// Too few flows of a class is a validation error.
dataprep::Dataset synthetic_flows(const Scenario& scenario, std::uint64_t seed, const SyntheticOptions& options);

struct FineDetector {
  mfdlc::MfdlcModel model;
  dataprep::NormalizationStats stats;
  std::string normal_class = std::string(kNormalLabel);
};

struct E2eOptions {
  Micros duration = 3610 * kMicrosPerSecond;
  std::size_t max_flows_per_window = 256;
  bool mitigate = true;
  Micros t_lim = mitigation::kDefaultTimeLimit;
};

struct E2eSummary {
  CoarseSummary coarse;
  std::size_t fine_invocations = 0;
  std::size_t flows_classified = 0;
  std::size_t flows_abnormal = 0;
  std::size_t confirmed_windows = 0;
  std::size_t mitigated_windows = 0;  // attack-on windows while a rule was active
  std::vector<mitigation::HandlingRule> rules;
  std::map<int, std::size_t> confirmed_by_switch;
};

struct E2eRun {
  std::vector<portwatch::WindowReport> reports;
  E2eSummary summary;
};

/// Coarse verdicts gate fine classification of the flagged switch's flows in
/// that window; abnormal predictions gate rule issuance. Coarse recall is
/// measured over attack windows not already covered by a rule.
E2eRun run_e2e(const Scenario& scenario, const portwatch::Thresholds& thresholds, const FineDetector& detector,
               std::uint64_t seed, const E2eOptions& options);

/// Per (switch, port, window) FlowIn / FlowOut / PacketIn counts of one replay.
struct PortCounts {
  std::uint64_t flow_in = 0;
  std::uint64_t flow_out = 0;
  std::uint64_t packet_in = 0;
  bool operator==(const PortCounts&) const = default;
};
using PortWindowKey = std::tuple<int, int, std::int64_t>;

struct ReplayTrace {
  std::map<PortWindowKey, PortCounts> ports;
  std::uint64_t mitigation_drops = 0;
};

/// Replays `duration`; each rule is applied at the first window boundary at
/// or after its issue time and cleared at the first one at or after expiry.
ReplayTrace trace_replay(const Scenario& scenario, std::uint64_t seed, Micros duration,
                         std::span<const mitigation::HandlingRule> rules, bool with_attacks = true);

struct MitigationReplay {
  portwatch::Thresholds thresholds;
  std::optional<std::int64_t> trigger_window;  // first abnormal coarse window
  std::vector<mitigation::HandlingRule> rules;
  std::size_t covered_bursts = 0;  // burst windows while a rule was active
  std::uint64_t ruled_packet_in = 0;          // ruled ports, covered bursts, rule on
  std::uint64_t ruled_packet_in_rule_off = 0;  // same windows without the rule
  std::uint64_t victim_packet_in = 0;          // victim switch, covered bursts, rule on
  std::uint64_t victim_packet_in_baseline = 0;  // same windows, attack-free replay
  std::uint64_t mitigation_drops = 0;
  /// Non-ruled ports while the rule is active: rule-on vs attack-free replay.
  std::size_t compared_port_windows = 0;
  std::size_t differing_port_windows = 0;
  /// First window from which rule-on and rule-off replays agree to the end.
  std::optional<std::int64_t> converged_from;
  std::int64_t expiry_window = 0;
};

/// Calibrate, replay until the coarse detector first fires, derive rules
/// from that window's attribution, then compare rule-on, rule-off and
/// attack-free replays of the same seed.
MitigationReplay run_mitigation_replay(const Scenario& scenario, std::uint64_t seed, Micros duration, Micros t_lim,
                                       Micros calibration_duration, double quantile = 0.01);

}  // namespace sdnguard::pipeline
