// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>

#include "checks.hpp"
#include "generators.hpp"
#include "oracles/flow_oracle.hpp"
#include "reference.hpp"
#include "sdnguard/dataprep.hpp"
#include "sdnguard/error.hpp"
#include "sdnguard/evalkit.hpp"
#include "sdnguard/mfdlc.hpp"
#include "sdnguard/pipeline.hpp"

using namespace sdnguard;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool within(double got, double want, double tol) { return std::abs(got - want) <= tol; }

Outcome ac1() {
  const auto cm = evalkit::from_counts(reference::kClasses, reference::kCounts);
  const double acc = *evalkit::multiclass_accuracy(cm);
  const auto recall = evalkit::per_class_recall(cm);
  const double ddos = *recall[cm.index_of("DDoS")], botnet = *recall[cm.index_of("BotNet")];
  const auto bin = evalkit::binary_metrics(cm, "Normal", evalkit::Collapse::Lenient);
  const double fpr = *bin.fpr, prec = *bin.precision;
  const bool ok = within(acc, 0.9983, 1e-4) && within(ddos, 0.9992, 1e-4) && within(botnet, 0.9388, 1e-4) &&
                  within(fpr, 0.0026, 1e-4) && within(prec, 0.9993, 1e-4);
  return {ok, false,
          "acc=" + fmt("%.6f", acc) + " ddos_recall=" + fmt("%.6f", ddos) + " botnet_recall=" + fmt("%.6f", botnet) +
              " fpr=" + fmt("%.6f", fpr) + " precision=" + fmt("%.6f", prec)};
}

Outcome ac2() {
  const auto r = checks::swt_report(derive_seed(2024, "ac2"), 100, 48);
  const bool ok = r.oracle_error < 1e-9 && r.constant_detail < 1e-10 && r.shift_error < 1e-9 &&
                  r.linearity_error < 1e-9;
  return {ok, false,
          "oracle=" + fmt("%.2e", r.oracle_error) + " const_detail=" + fmt("%.2e", r.constant_detail) +
              " shift=" + fmt("%.2e", r.shift_error) + " linear=" + fmt("%.2e", r.linearity_error)};
}

Outcome ac3() {
  double worst = 0;
  std::string detail;
  for (const auto& r : checks::gradient_reports(derive_seed(2024, "ac3"))) {
    worst = std::max(worst, r.max_relative_error);
    detail += r.name + "=" + fmt("%.1e", r.max_relative_error) + " ";
  }
  return {worst < 1e-4, false, detail + "max=" + fmt("%.2e", worst)};
}

Outcome ac4() {
  Rng rng(derive_seed(2024, "ac4"));
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto f = gen::random_flow(rng);
    const auto got = flowmeter::extract_features(f, 5.0).values;
    const auto want = oracle::naive_features(f, 5e6, flowmeter::nominal_header_bytes(f.key.protocol));
    for (std::size_t j = 0; j < flowmeter::kFeatureCount; ++j) {
      worst = std::max(worst, std::abs(got[j] - want[j]) / std::max(1.0, std::abs(want[j])));
    }
  }
  return {worst <= 1e-9, false, "flows=1000 max_rel_err=" + fmt("%.2e", worst)};
}

Outcome ac5() {
  const auto sc = pipeline::Scenario::from(KvConfig{});
  const auto t = pipeline::calibrate(sc, 101, 600 * kMicrosPerSecond, 0.01);
  const auto run = pipeline::run_coarse(sc, t, 7, 3610 * kMicrosPerSecond);
  const auto& s = run.summary;
  const double recall = s.recall().value_or(0), ffr = s.false_flag_rate().value_or(1);
  const bool ok = recall >= 0.99 && ffr <= 0.01 && s.localization_ok() && s.detected_bursts > 0;
  return {ok, false,
          "recall=" + fmt("%.4f", recall) + " (" + std::to_string(s.detected_windows) + "/" +
              std::to_string(s.attack_windows) + ") false_flag_rate=" + fmt("%.4f", ffr) + " localized=" +
              std::to_string(s.localized_bursts) + "/" + std::to_string(s.detected_bursts) +
              " thresholds=" + fmt("%.4f", t.packet_in_threshold) + "/" + fmt("%.4f", t.flow_io_threshold)};
}

Outcome ac6() {
  const auto sc = pipeline::Scenario::from(KvConfig{});
  const std::uint64_t seed = 2024;
  const auto ds = pipeline::synthetic_flows(sc, derive_seed(seed, "data"), {400 * kMicrosPerSecond, 1000});
  const auto sp = dataprep::split(ds, 0.7, derive_seed(seed, "split"));
  const auto [train, stats] = dataprep::normalize(sp.train);
  const auto test = dataprep::apply_normalization(sp.test, stats);
  mfdlc::MfdlcConfig cfg;
  cfg.level = 3;
  cfg.classes = {std::string(pipeline::kNormalLabel), std::string(pipeline::kAttackLabel)};
  auto model = mfdlc::build_model(cfg, derive_seed(seed, "model"));
  const auto res = mfdlc::train(model, train, derive_seed(seed, "train"));
  const auto probs = mfdlc::predict_batch(model, test);
  const auto preds = mfdlc::predicted_labels(model, probs);
  const auto cm = evalkit::confusion(test.labels, preds, cfg.classes);
  const double acc = *evalkit::binary_metrics(cm, pipeline::kNormalLabel).accuracy;
  double lo = INFINITY, tail = 0;
  for (const auto& e : res.curve) lo = std::min(lo, e.mean_loss);
  const std::size_t k = std::min<std::size_t>(10, res.curve.size());
  for (std::size_t i = res.curve.size() - k; i < res.curve.size(); ++i) tail += res.curve[i].mean_loss;
  tail /= static_cast<double>(k);
  const double excess = (tail - lo) / lo;
  const bool ok = ds.rows() >= 2000 && acc >= 0.95 && excess <= 0.05;
  return {ok, false,
          "samples=" + std::to_string(ds.rows()) + " epochs=" + std::to_string(res.curve.size()) +
              " held_out_acc=" + fmt("%.4f", acc) + " final10_vs_min=" + fmt("%+.2f%%", 100 * excess)};
}

Outcome ac7() {
  const auto sc = pipeline::Scenario::from(KvConfig{});
  const auto r = pipeline::run_mitigation_replay(sc, 7, 150 * kMicrosPerSecond, mitigation::kDefaultTimeLimit,
                                                 600 * kMicrosPerSecond);
  const bool ok = !r.rules.empty() && r.covered_bursts > 0 && r.ruled_packet_in == 0 &&
                  r.victim_packet_in == r.victim_packet_in_baseline && r.differing_port_windows == 0;
  std::string rules;
  for (const auto& rule : r.rules) rules += "s" + std::to_string(rule.switch_id) + "-p" + std::to_string(rule.port) + " ";
  return {ok, false,
          "rules=" + rules + "covered_bursts=" + std::to_string(r.covered_bursts) +
              " ruled_port_packet_in=" + std::to_string(r.ruled_packet_in) + " (rule off " +
              std::to_string(r.ruled_packet_in_rule_off) + ") victim_packet_in=" + std::to_string(r.victim_packet_in) +
              " baseline=" + std::to_string(r.victim_packet_in_baseline) + " differing_port_windows=" +
              std::to_string(r.differing_port_windows) + "/" + std::to_string(r.compared_port_windows)};
}

Outcome ac8() {
  const char* env = std::getenv("SDNGUARD_INSDN_CSV");
  if (!env || !std::filesystem::is_regular_file(env)) {
    return {true, true, "no InSDN-format CSV (set SDNGUARD_INSDN_CSV to run the soft check)"};
  }
  const std::uint64_t seed = 2024;
  auto ds = dataprep::load_csv(env);
  ds = dataprep::split(ds, 0.1, derive_seed(seed, "subsample")).train;
  ds = dataprep::clean(ds, std::vector<dataprep::Importance>(ds.cols(), dataprep::Importance::Low));
  ds = dataprep::align_columns(ds, flowmeter::kFeatureNames);
  const auto sp = dataprep::split(ds, 0.7, derive_seed(seed, "split"));
  const auto [train, stats] = dataprep::normalize(sp.train);
  const auto test = dataprep::apply_normalization(sp.test, stats);
  mfdlc::MfdlcConfig cfg;
  cfg.classes = dataprep::class_list(train, mfdlc::kDefaultClasses);
  auto model = mfdlc::build_model(cfg, derive_seed(seed, "model"));
  mfdlc::train(model, train, derive_seed(seed, "train"));
  const auto preds = mfdlc::predicted_labels(model, mfdlc::predict_batch(model, test));
  const auto cm = evalkit::confusion(test.labels, preds, cfg.classes);
  const double acc = *evalkit::binary_metrics(cm, "Normal").accuracy;
  return {acc >= 0.97, false, "rows=" + std::to_string(ds.rows()) + " binary_acc=" + fmt("%.4f", acc)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* what;
    double limit_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"AC1", "reference confusion matrix metrics", 1, ac1},
      {"AC2", "wavelet decomposition vs brute-force oracle", 10, ac2},
      {"AC3", "finite-difference gradient checks", 120, ac3},
      {"AC4", "flow features vs naive recomputation", 30, ac4},
      {"AC5", "coarse detection over a simulated hour", 120, ac5},
      {"AC6", "classifier on synthetic two-class flows", 600, ac6},
      {"AC7", "mitigation replay", 60, ac7},
      {"AC8", "InSDN soft check", 1e9, ac8},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s %s: %s [%s] %.2fs%s\n", pass ? "PASS" : "FAIL", c.id, c.what, o.detail.c_str(), secs,
                o.skipped ? " (skipped)" : (in_time ? "" : " (over time limit)"));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
