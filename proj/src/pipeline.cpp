#include "sdnguard/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "sdnguard/error.hpp"
#include "sdnguard/flowmeter.hpp"
#include "sdnguard/rng.hpp"

namespace sdnguard::pipeline {
namespace {

constexpr std::string_view kModule = "pipeline";

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

using WindowHandler = std::function<void(const portwatch::WindowReport&, const simnet::StepResult&)>;
using StepHook = std::function<void(simnet::Simulator&, Micros)>;

// Steps the simulator one window at a time, folds the counter events into
// per-switch windows and judges each closed window. `before_step` runs
// between steps (the only point where rules may change).
void replay(simnet::Simulator& sim, const portwatch::Thresholds* thresholds, Micros duration,
            const WindowHandler& on_window, const StepHook& before_step = {}) {
  const Micros window = sim.config().window;
  portwatch::WindowAccumulator acc(sim.switch_ids(), window);
  std::vector<portwatch::PortWindowStats> closed;
  while (sim.clock() < duration) {
    if (before_step) before_step(sim, sim.clock());
    const auto step = sim.step(std::min(window, duration - sim.clock()));
    closed.clear();
    for (const auto& ev : step.counters) acc.add(ev, closed);
    acc.advance_to(step.end, closed);
    for (const auto& stats : closed) {
      portwatch::WindowReport rep;
      rep.stats = stats;
      rep.ratios = portwatch::compute_ratios(stats);
      if (thresholds) rep.verdict = portwatch::judge(rep.ratios, *thresholds);
      on_window(rep, step);
    }
  }
}

struct BurstTracker {
  struct Burst {
    int switch_id = 0;
    int port = 0;
    Micros begin = 0;
    Micros end = 0;
    bool detected = false;
    bool localized = true;
  };
  std::vector<Burst> bursts;

  BurstTracker(const Scenario& scenario, Micros duration) {
    const auto points = scenario.attack_points();
    for (std::size_t a = 0; a < scenario.attacks.size(); ++a) {
      const auto& spec = scenario.attacks[a];
      for (Micros s = spec.start; s < spec.end && s + spec.on_duration <= duration; s += spec.period()) {
        bursts.push_back({points[a].first, points[a].second, s, s + spec.on_duration});
      }
    }
  }

  void observe(const portwatch::WindowReport& rep) {
    if (rep.verdict != portwatch::Verdict::Abnormal) return;
    const Micros b = rep.stats.begin();
    const Micros e = rep.stats.end();
    for (auto& burst : bursts) {
      if (!(b < burst.end && e > burst.begin)) continue;
      if (rep.stats.switch_id != burst.switch_id) {
        burst.localized = false;
        continue;
      }
      burst.detected = true;
      const auto findings = mitigation::findings_from_window(rep);
      if (findings.size() != 1 || findings[0].port != burst.port) burst.localized = false;
    }
  }

  void finish(CoarseSummary& s) const {
    s.bursts = bursts.size();
    for (const auto& b : bursts) {
      if (!b.detected) continue;
      ++s.detected_bursts;
      if (b.localized) ++s.localized_bursts;
    }
  }
};

bool attack_active_at(const Scenario& scenario, const std::vector<std::pair<int, int>>& points, int switch_id,
                      Micros begin, Micros end) {
  for (std::size_t a = 0; a < scenario.attacks.size(); ++a) {
    if (points[a].first == switch_id && scenario.attacks[a].active_during(begin, end)) return true;
  }
  return false;
}

// Shared bookkeeping of the coarse summary; `excluded` windows (attack
// already handled by a rule) count toward neither recall nor idle rates.
void tally(CoarseSummary& s, const std::set<int>& attacked, bool attack_on, bool excluded,
           const portwatch::WindowReport& rep) {
  const bool flagged = rep.verdict == portwatch::Verdict::Abnormal;
  ++s.windows;
  if (excluded) return;
  if (attack_on) {
    ++s.attack_windows;
    if (flagged) ++s.detected_windows;
  } else {
    ++s.idle_windows;
    if (flagged) ++s.idle_flags;
  }
  if (!attacked.contains(rep.stats.switch_id)) {
    ++s.other_windows;
    if (flagged) ++s.other_flags;
  }
}

}  // namespace

Scenario Scenario::from(const KvConfig& cfg) {
  Scenario s;
  s.topology = simnet::topology_from(cfg);
  s.sim = simnet::sim_config_from(cfg);
  s.attacks = simnet::attacks_from(cfg);
  s.topology.validate();
  for (const auto& a : s.attacks) {
    if (!s.topology.host_index(a.attacker)) fail(ErrorKind::Config, kModule, "attack.host is not a known host");
  }
  return s;
}

simnet::Simulator Scenario::make_simulator(std::uint64_t seed, bool with_attacks) const {
  simnet::Simulator out(topology, sim, seed);
  if (with_attacks) {
    for (const auto& a : attacks) out.inject_attack(a);
  }
  return out;
}

std::vector<std::pair<int, int>> Scenario::attack_points() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& a : attacks) {
    const auto& at = topology.attachment_of(*topology.host_index(a.attacker));
    out.emplace_back(at.switch_id, at.port);
  }
  return out;
}

bool Scenario::is_attacker(Ipv4 address) const {
  return std::any_of(attacks.begin(), attacks.end(), [&](const auto& a) { return a.attacker == address; });
}

std::int64_t first_steady_window(const simnet::SimConfig& sim) {
  return (sim.warmup + sim.window - 1) / sim.window;
}

portwatch::Thresholds calibrate(const Scenario& scenario, std::uint64_t seed, Micros duration, double quantile) {
  auto sim = scenario.make_simulator(seed, false);
  const auto first = first_steady_window(scenario.sim);
  std::vector<portwatch::RatioPair> samples;
  replay(sim, nullptr, duration, [&](const portwatch::WindowReport& rep, const simnet::StepResult&) {
    if (rep.stats.window_index >= first) samples.push_back(rep.ratios);
  });
  return portwatch::calibrate_thresholds(samples, quantile);
}

std::optional<double> CoarseSummary::recall() const { return ratio(detected_windows, attack_windows); }
std::optional<double> CoarseSummary::false_flag_rate() const { return ratio(other_flags, other_windows); }
std::optional<double> CoarseSummary::false_positive_rate() const { return ratio(idle_flags, idle_windows); }

CoarseRun run_coarse(const Scenario& scenario, const portwatch::Thresholds& thresholds, std::uint64_t seed,
                     Micros duration) {
  auto sim = scenario.make_simulator(seed);
  const auto points = scenario.attack_points();
  std::set<int> attacked;
  for (const auto& p : points) attacked.insert(p.first);

  CoarseRun run;
  run.summary.attacked_switches.assign(attacked.begin(), attacked.end());
  BurstTracker bursts(scenario, duration);
  replay(sim, &thresholds, duration, [&](const portwatch::WindowReport& rep, const simnet::StepResult&) {
    const bool on = attack_active_at(scenario, points, rep.stats.switch_id, rep.stats.begin(), rep.stats.end());
    tally(run.summary, attacked, on, false, rep);
    bursts.observe(rep);
    run.reports.push_back(rep);
  });
  bursts.finish(run.summary);
  return run;
}

dataprep::Dataset synthetic_flows(const Scenario& scenario, std::uint64_t seed, const SyntheticOptions& options) {
  if (scenario.attacks.empty()) fail(ErrorKind::Config, kModule, "synthetic flows need an attack");
  auto sim = scenario.make_simulator(derive_seed(seed, "synthetic-sim"));
  std::vector<PacketRecord> log;
  while (sim.clock() < options.duration) {
    auto step = sim.step(std::min(sim.config().window, options.duration - sim.clock()));
    log.insert(log.end(), step.packets.begin(), step.packets.end());
  }
  const auto flows = flowmeter::assemble_flows(log).flows;
  log.clear();
  log.shrink_to_fit();

  std::vector<std::size_t> normal, attack;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    (scenario.is_attacker(flows[i].key.src_addr) ? attack : normal).push_back(i);
  }
  if (normal.size() < options.per_class || attack.size() < options.per_class) {
    fail(ErrorKind::Validation, kModule,
         "replay produced " + std::to_string(normal.size()) + " normal and " + std::to_string(attack.size()) +
             " attack flows; " + std::to_string(options.per_class) + " of each are needed");
  }
  Rng rng(derive_seed(seed, "synthetic-sample"));
  shuffle(normal.begin(), normal.end(), rng);
  shuffle(attack.begin(), attack.end(), rng);
  normal.resize(options.per_class);
  attack.resize(options.per_class);
  std::sort(normal.begin(), normal.end());
  std::sort(attack.begin(), attack.end());

  std::vector<flowmeter::FeatureVector> rows;
  for (auto i : normal) {
    rows.push_back(flowmeter::extract_features(flows[i]));
    rows.back().label = std::string(kNormalLabel);
  }
  for (auto i : attack) {
    rows.push_back(flowmeter::extract_features(flows[i]));
    rows.back().label = std::string(kAttackLabel);
  }
  return dataprep::Dataset::from_features(rows);
}

E2eRun run_e2e(const Scenario& scenario, const portwatch::Thresholds& thresholds, const FineDetector& detector,
               std::uint64_t seed, const E2eOptions& options) {
  if (options.max_flows_per_window == 0) fail(ErrorKind::Config, kModule, "e2e.max_flows must be positive");
  auto sim = scenario.make_simulator(seed);
  const auto points = scenario.attack_points();
  std::set<int> attacked;
  for (const auto& p : points) attacked.insert(p.first);

  E2eRun run;
  auto& summary = run.summary;
  summary.coarse.attacked_switches.assign(attacked.begin(), attacked.end());
  BurstTracker bursts(scenario, options.duration);
  std::vector<mitigation::HandlingRule> pending;

  const auto guarded = [&](int switch_id, Micros t) {
    for (const auto& g : sim.port_guards()) {
      if (g.switch_id != switch_id || t >= g.expiry) continue;
      for (const auto& p : points) {
        if (p.first == switch_id && p.second == g.port) return true;
      }
    }
    return false;
  };

  const auto before_step = [&](simnet::Simulator& s, Micros now) {
    mitigation::expire_rules(s, now);
    if (!pending.empty()) {
      mitigation::apply_rules(s, pending);
      pending.clear();
    }
  };

  const auto on_window = [&](const portwatch::WindowReport& rep, const simnet::StepResult& step) {
    const int sw = rep.stats.switch_id;
    const bool on = attack_active_at(scenario, points, sw, rep.stats.begin(), rep.stats.end());
    const bool mitigated = on && guarded(sw, rep.stats.begin());
    if (mitigated) ++summary.mitigated_windows;
    tally(summary.coarse, attacked, on, mitigated, rep);
    bursts.observe(rep);
    run.reports.push_back(rep);
    if (rep.verdict != portwatch::Verdict::Abnormal) return;

    // Fine detection on the flagged switch's traffic of this window only.
    ++summary.fine_invocations;
    std::vector<PacketRecord> packets;
    for (const auto& p : step.packets) {
      if (p.switch_id == sw && p.ts >= rep.stats.begin() && p.ts < rep.stats.end()) packets.push_back(p);
    }
    auto flows = flowmeter::assemble_flows(packets).flows;
    if (flows.empty()) return;
    std::vector<std::size_t> idx(flows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > options.max_flows_per_window) {
      Rng rng(derive_seed(seed, "e2e-sample", static_cast<std::uint64_t>(rep.stats.window_index)));
      shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_flows_per_window);
      std::sort(idx.begin(), idx.end());
    }
    std::vector<flowmeter::FeatureVector> rows;
    for (auto i : idx) rows.push_back(flowmeter::extract_features(flows[i]));
    const auto ds = dataprep::apply_normalization(dataprep::Dataset::from_features(rows), detector.stats);
    const auto probs = mfdlc::predict_batch(detector.model, ds);
    const auto labels = mfdlc::predicted_labels(detector.model, probs);

    std::vector<mitigation::Finding> findings;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == detector.normal_class) continue;
      findings.push_back(mitigation::finding_from_provenance(ds.provenance[i]));
    }
    summary.flows_classified += labels.size();
    summary.flows_abnormal += findings.size();
    if (findings.empty()) return;
    ++summary.confirmed_windows;
    ++summary.confirmed_by_switch[sw];
    if (!options.mitigate) return;
    auto rules = mitigation::derive_rules(findings, rep.stats.end(), options.t_lim);
    summary.rules.insert(summary.rules.end(), rules.begin(), rules.end());
    pending.insert(pending.end(), rules.begin(), rules.end());
  };

  replay(sim, &thresholds, options.duration, on_window, before_step);
  bursts.finish(summary.coarse);
  return run;
}

ReplayTrace trace_replay(const Scenario& scenario, std::uint64_t seed, Micros duration,
                         std::span<const mitigation::HandlingRule> rules, bool with_attacks) {
  auto sim = scenario.make_simulator(seed, with_attacks);
  std::vector<bool> applied(rules.size(), false);
  ReplayTrace trace;
  const Micros window = sim.config().window;
  while (sim.clock() < duration) {
    const Micros now = sim.clock();
    mitigation::expire_rules(sim, now);
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (!applied[i] && rules[i].issued <= now) {
        applied[i] = true;
        if (rules[i].expiry > now) mitigation::apply_rules(sim, std::span(&rules[i], 1));
      }
    }
    const auto step = sim.step(std::min(window, duration - now));
    for (const auto& ev : step.counters) {
      auto& c = trace.ports[{ev.switch_id, ev.port, ev.ts / window}];
      switch (ev.kind) {
        case simnet::CounterKind::FlowIn:
          ++c.flow_in;
          break;
        case simnet::CounterKind::FlowOut:
          ++c.flow_out;
          break;
        case simnet::CounterKind::PacketIn:
          ++c.packet_in;
          break;
      }
    }
    for (const auto& ev : step.control) {
      if (ev.kind == simnet::ControlKind::MitigationDrop) trace.mitigation_drops += ev.count;
    }
  }
  return trace;
}

MitigationReplay run_mitigation_replay(const Scenario& scenario, std::uint64_t seed, Micros duration, Micros t_lim,
                                       Micros calibration_duration, double quantile) {
  if (scenario.attacks.empty()) fail(ErrorKind::Config, kModule, "mitigation replay needs an attack");
  MitigationReplay out;
  out.thresholds = calibrate(scenario, derive_seed(seed, "calibrate"), calibration_duration, quantile);

  // Coarse detection up to the first abnormal window decides the rules.
  {
    auto sim = scenario.make_simulator(seed);
    const Micros window = sim.config().window;
    portwatch::WindowAccumulator acc(sim.switch_ids(), window);
    std::vector<portwatch::PortWindowStats> closed;
    std::vector<mitigation::Finding> findings;
    while (sim.clock() < duration && findings.empty()) {
      const auto step = sim.step(std::min(window, duration - sim.clock()));
      closed.clear();
      for (const auto& ev : step.counters) acc.add(ev, closed);
      acc.advance_to(step.end, closed);
      for (const auto& stats : closed) {
        portwatch::WindowReport rep{stats, portwatch::compute_ratios(stats), {}};
        rep.verdict = portwatch::judge(rep.ratios, out.thresholds);
        if (rep.verdict != portwatch::Verdict::Abnormal) continue;
        if (!out.trigger_window) out.trigger_window = stats.window_index;
        const auto f = mitigation::findings_from_window(rep);
        findings.insert(findings.end(), f.begin(), f.end());
      }
    }
    if (findings.empty()) return out;
    out.rules = mitigation::derive_rules(findings, (*out.trigger_window + 1) * window, t_lim);
  }

  const Micros window = scenario.sim.window;
  const auto on = trace_replay(scenario, seed, duration, out.rules);
  const auto off = trace_replay(scenario, seed, duration, {});
  const auto base = trace_replay(scenario, seed, duration, {}, false);
  out.mitigation_drops = on.mitigation_drops;

  const auto ruled = [&](int sw, int port) {
    return std::any_of(out.rules.begin(), out.rules.end(),
                       [&](const auto& r) { return r.switch_id == sw && r.port == port; });
  };
  const auto active = [&](std::int64_t w) {
    return std::any_of(out.rules.begin(), out.rules.end(),
                       [&](const auto& r) { return w * window >= r.issued && (w + 1) * window <= r.expiry; });
  };
  const auto count = [](const ReplayTrace& t, const PortWindowKey& k) {
    auto it = t.ports.find(k);
    return it == t.ports.end() ? PortCounts{} : it->second;
  };
  const auto points = scenario.attack_points();
  const std::int64_t windows = (duration + window - 1) / window;
  std::set<int> victims;
  for (const auto& r : out.rules) victims.insert(r.switch_id);

  for (std::int64_t w = 0; w < windows; ++w) {
    if (!active(w)) continue;
    for (const auto& sw : scenario.topology.switches) {
      const bool burst =
          victims.contains(sw.id) && attack_active_at(scenario, points, sw.id, w * window, (w + 1) * window);
      if (burst) ++out.covered_bursts;
      for (int port : sw.ports) {
        const PortWindowKey key{sw.id, port, w};
        if (burst) {
          out.victim_packet_in += count(on, key).packet_in;
          out.victim_packet_in_baseline += count(base, key).packet_in;
          if (ruled(sw.id, port)) {
            out.ruled_packet_in += count(on, key).packet_in;
            out.ruled_packet_in_rule_off += count(off, key).packet_in;
          }
        }
        if (!ruled(sw.id, port)) {
          ++out.compared_port_windows;
          if (!(count(on, key) == count(base, key))) ++out.differing_port_windows;
        }
      }
    }
  }

  Micros last_expiry = 0;
  for (const auto& r : out.rules) last_expiry = std::max(last_expiry, r.expiry);
  out.expiry_window = (last_expiry + window - 1) / window;
  std::optional<std::int64_t> converged;
  for (std::int64_t w = windows - 1; w >= out.expiry_window; --w) {
    bool same = true;
    for (const auto& sw : scenario.topology.switches) {
      for (int port : sw.ports) same = same && count(on, {sw.id, port, w}) == count(off, {sw.id, port, w});
    }
    if (!same) break;
    converged = w;
  }
  out.converged_from = converged;
  return out;
}

}  // namespace sdnguard::pipeline
