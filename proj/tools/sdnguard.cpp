// Command-line driver: each subcommand reads its knobs from a key = value
// config (plus --set overrides), checks inputs before writing anything, and
// stamps every artifact with the config hash and seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdnguard/dataprep.hpp"
#include "sdnguard/error.hpp"
#include "sdnguard/evalkit.hpp"
#include "sdnguard/flowmeter.hpp"
#include "sdnguard/kvconfig.hpp"
#include "sdnguard/mfdlc.hpp"
#include "sdnguard/mitigation.hpp"
#include "sdnguard/pipeline.hpp"
#include "sdnguard/portwatch.hpp"
#include "sdnguard/simnet.hpp"
#include "sdnguard/textio.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sdnguard;

namespace {

constexpr std::string_view kModule = "cli";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> sets;
};

struct Run {
  std::string name;
  KvConfig cfg;
  std::uint64_t seed = 0;
  bool seeded = false;
  fs::path out;
  std::vector<std::string> preamble;

  fs::path path(const std::string& file) const { return out / file; }
};

Run make_run(const std::string& name, const Options& opt, bool stochastic) {
  Run run;
  run.name = name;
  if (!opt.config.empty()) run.cfg = KvConfig::load(opt.config);
  for (const auto& s : opt.sets) run.cfg.set(s);
  std::optional<std::uint64_t> seed = opt.seed;
  if (run.cfg.contains("seed")) {
    const auto v = run.cfg.get_int("seed", 0);
    if (v < 0) fail(ErrorKind::Config, kModule, "seed must be non-negative");
    if (!seed) seed = static_cast<std::uint64_t>(v);
  }
  if (stochastic && !seed) fail(ErrorKind::Config, kModule, name + " needs --seed (or a 'seed' config key)");
  run.seed = seed.value_or(0);
  run.seeded = seed.has_value();
  run.out = opt.out;
  run.preamble = {"config_hash=" + run.cfg.hash() + " seed=" + std::to_string(run.seed), "subcommand=" + name};
  return run;
}

fs::path input_path(const Run& run, const std::string& key) {
  const auto v = run.cfg.raw(key);
  if (!v || v->empty()) fail(ErrorKind::Config, kModule, run.name + " needs " + key + "=<path>");
  fs::path p(*v);
  if (!fs::is_regular_file(p)) fail(ErrorKind::Io, kModule, key + ": no such file: " + p.string());
  return p;
}

std::optional<fs::path> optional_input(const Run& run, const std::string& key) {
  if (!run.cfg.contains(key)) return std::nullopt;
  return input_path(run, key);
}

Micros seconds_key(const Run& run, const std::string& key, double fallback) {
  const double s = run.cfg.get_double(key, fallback);
  if (!(s >= 0)) fail(ErrorKind::Config, kModule, key + " must be >= 0");
  return seconds_to_micros(s);
}

double fraction_key(const Run& run, const std::string& key, double fallback) {
  const double f = run.cfg.get_double(key, fallback);
  if (!(f > 0 && f < 1)) fail(ErrorKind::Config, kModule, key + " must lie in (0, 1)");
  return f;
}

// Keys any subcommand understands. A config file is shared between
// subcommands, so keys meant for another one are tolerated; anything else
// is a typo.
const std::set<std::string, std::less<>> kKnownKeys = {
    "seed",
    "topology.switches", "topology.hosts_per_switch",
    "sim.window_s", "sim.warmup_s", "sim.flow_table_capacity", "sim.buffer_capacity", "sim.controller_capacity",
    "sim.controller_latency_ms", "sim.shared_controller_budget", "sim.rule_timeout_s", "sim.persistent_sessions",
    "sim.persistent_gap_ms", "sim.session_rate", "sim.known_server_fraction",
    "attack.enabled", "attack.host", "attack.intensity_bps", "attack.on_s", "attack.off_s", "attack.start_s",
    "attack.end_s", "attack.packet_bytes", "attack.dst_port",
    "simulate.duration_s", "calibrate.duration_s", "coarse.quantile", "coarse.duration_s", "coarse.thresholds",
    "extract.input", "extract.flow_timeout_s", "extract.activity_timeout_s", "extract.label_attacker",
    "extract.max_per_class",
    "prep.input", "prep.train_fraction", "prep.subsample", "prep.high_importance",
    "train.input", "train.validation", "crossval.input", "crossval.folds",
    "eval.model", "eval.input", "eval.normal_class", "eval.model_name", "eval.dataset_name",
    "e2e.duration_s", "e2e.max_flows", "e2e.mitigate", "e2e.model", "e2e.stats",
    "synthetic.duration_s", "synthetic.per_class", "synthetic.train_fraction",
    "mitigation.t_lim_s", "mitigate.duration_s",
    "mfdlc.level", "mfdlc.wavelet", "mfdlc.image_height", "mfdlc.image_width", "mfdlc.conv1_channels",
    "mfdlc.conv2_channels", "mfdlc.kernel", "mfdlc.pool", "mfdlc.dropout1", "mfdlc.dropout2", "mfdlc.lstm_units",
    "mfdlc.classes", "mfdlc.learning_rate", "mfdlc.l2", "mfdlc.batch_size", "mfdlc.epochs",
    "mfdlc.class_weighting",
};

// All knobs are read; unknown keys abort before any artifact is written.
void ready(const Run& run) {
  std::string unknown;
  for (const auto& key : run.cfg.unused_keys()) {
    if (kKnownKeys.contains(key) || key.starts_with("topology.host.")) continue;
    unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) fail(ErrorKind::Config, kModule, "unknown keys: " + unknown);
  fs::create_directories(run.out);
}

void write_json(const Run& run, const std::string& file, const json& body) {
  json doc;
  doc["config_hash"] = run.cfg.hash();
  doc["seed"] = run.seed;
  doc["subcommand"] = run.name;
  for (const auto& [k, v] : body.items()) doc[k] = v;
  auto out = open_output(run.path(file), kModule);
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + run.path(file).string());
}

json metric(const evalkit::Metric& m) {
  if (!m) return std::string(evalkit::kUndefined);
  return *m;
}

json thresholds_json(const portwatch::Thresholds& t) {
  return {{"packet_in_threshold", t.packet_in_threshold},
          {"flow_io_threshold", t.flow_io_threshold},
          {"quantile", t.quantile},
          {"samples", t.samples}};
}

json coarse_json(const pipeline::CoarseSummary& s) {
  return {{"attacked_switches", s.attacked_switches},
          {"windows", s.windows},
          {"attack_windows", s.attack_windows},
          {"detected_windows", s.detected_windows},
          {"recall", metric(s.recall())},
          {"idle_windows", s.idle_windows},
          {"idle_flags", s.idle_flags},
          {"fpr", metric(s.false_positive_rate())},
          {"other_switch_windows", s.other_windows},
          {"other_switch_flags", s.other_flags},
          {"false_flag_rate", metric(s.false_flag_rate())},
          {"bursts", s.bursts},
          {"detected_bursts", s.detected_bursts},
          {"localized_bursts", s.localized_bursts}};
}

void progress(const Run& run, const std::string& msg) { std::cerr << run.name << ": " << msg << '\n'; }

struct CalibrationKnobs {
  Micros duration;
  double quantile;
  std::optional<fs::path> thresholds;
};

CalibrationKnobs calibration_knobs(const Run& run, bool allow_file) {
  CalibrationKnobs k;
  k.duration = seconds_key(run, "calibrate.duration_s", 600);
  k.quantile = run.cfg.get_double("coarse.quantile", 0.01);
  if (allow_file) k.thresholds = optional_input(run, "coarse.thresholds");
  return k;
}

portwatch::Thresholds obtain_thresholds(const Run& run, const pipeline::Scenario& sc, const CalibrationKnobs& k) {
  if (k.thresholds) return portwatch::load_thresholds(*k.thresholds);
  progress(run, "calibrating on an attack-free replay");
  auto t = pipeline::calibrate(sc, derive_seed(run.seed, "calibrate"), k.duration, k.quantile);
  portwatch::save_thresholds(t, run.path("thresholds.txt"), run.preamble);
  return t;
}

// ---- subcommands ---------------------------------------------------------

void cmd_simulate(const Run& run) {
  const auto sc = pipeline::Scenario::from(run.cfg);
  const Micros duration = seconds_key(run, "simulate.duration_s", 60);
  ready(run);
  auto sim = sc.make_simulator(run.seed);
  std::vector<PacketRecord> log;
  while (sim.clock() < duration) {
    auto step = sim.step(std::min(sim.config().window, duration - sim.clock()));
    log.insert(log.end(), step.packets.begin(), step.packets.end());
  }
  simnet::emit_packet_records(log, run.path("packets.csv"), run.preamble);

  auto out = open_output(run.path("switch_counters.csv"), kModule);
  write_preamble(out, run.preamble);
  out << "switch_id,port,packets_in,flows_in,packets_out,flows_out,packet_in_sent,mitigation_drops\n";
  json switches = json::array();
  for (int id : sim.switch_ids()) {
    const auto st = sim.switch_state(id);
    for (const auto& [port, c] : st.counters.ports) {
      out << id << ',' << port << ',' << c.packets_in << ',' << c.flows_in << ',' << c.packets_out << ','
          << c.flows_out << ',' << c.packet_in_sent << ',' << c.mitigation_drops << '\n';
    }
    switches.push_back({{"switch_id", id},
                        {"buffer_drops", st.counters.buffer_drops},
                        {"controller_drops", st.counters.controller_drops},
                        {"evictions", st.counters.evictions},
                        {"rules_installed", st.counters.rules_installed}});
  }
  write_json(run, "simulate_summary.json",
             {{"duration_s", static_cast<double>(duration) / kMicrosPerSecond},
              {"packets", log.size()},
              {"switches", switches}});
}

void cmd_calibrate(const Run& run) {
  const auto sc = pipeline::Scenario::from(run.cfg);
  const auto k = calibration_knobs(run, false);
  ready(run);
  const auto t = obtain_thresholds(run, sc, k);
  std::cout << "packet_in_threshold=" << format_double(t.packet_in_threshold)
            << " flow_io_threshold=" << format_double(t.flow_io_threshold) << " samples=" << t.samples << '\n';
}

void cmd_coarse(const Run& run) {
  const auto sc = pipeline::Scenario::from(run.cfg);
  const auto k = calibration_knobs(run, true);
  const Micros duration = seconds_key(run, "coarse.duration_s", 3610);
  ready(run);
  const auto t = obtain_thresholds(run, sc, k);
  progress(run, "replaying the attack scenario");
  const auto res = pipeline::run_coarse(sc, t, run.seed, duration);
  portwatch::write_window_csv(res.reports, run.path("windows.csv"), run.preamble);
  write_json(run, "coarse_summary.json", {{"thresholds", thresholds_json(t)}, {"coarse", coarse_json(res.summary)}});
  const auto& s = res.summary;
  std::cout << "recall=" << evalkit::format_metric(s.recall())
            << " false_flag_rate=" << evalkit::format_metric(s.false_flag_rate())
            << " localized_bursts=" << s.localized_bursts << "/" << s.detected_bursts << '\n';
}

void cmd_extract(const Run& run) {
  const auto input = input_path(run, "extract.input");
  flowmeter::Timeouts timeouts;
  timeouts.flow_timeout_s = run.cfg.get_double("extract.flow_timeout_s", timeouts.flow_timeout_s);
  timeouts.activity_timeout_s = run.cfg.get_double("extract.activity_timeout_s", timeouts.activity_timeout_s);
  std::optional<Ipv4> attacker;
  if (auto a = run.cfg.raw("extract.label_attacker")) {
    attacker = parse_ipv4(*a);
    if (!attacker) fail(ErrorKind::Config, kModule, "extract.label_attacker must be a dotted-quad address");
  }
  const auto max_per_class = run.cfg.get_int("extract.max_per_class", 0);
  if (max_per_class < 0) fail(ErrorKind::Config, kModule, "extract.max_per_class must be >= 0");
  if (max_per_class > 0 && !run.seeded) fail(ErrorKind::Config, kModule, "extract.max_per_class needs --seed");
  ready(run);

  const auto packets = read_packet_records(input).records;
  const auto assembled = flowmeter::assemble_flows(packets, timeouts);
  std::vector<flowmeter::FeatureVector> rows;
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (const auto& f : assembled.flows) {
    auto fv = flowmeter::extract_features(f, timeouts.activity_timeout_s);
    if (attacker) {
      fv.label = f.key.src_addr == *attacker ? std::string(pipeline::kAttackLabel)
                                             : std::string(pipeline::kNormalLabel);
    }
    by_label[fv.label].push_back(rows.size());
    rows.push_back(std::move(fv));
  }
  if (max_per_class > 0) {
    Rng rng(derive_seed(run.seed, "extract-sample"));
    std::vector<std::size_t> keep;
    for (auto& [label, idx] : by_label) {
      shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(max_per_class)));
      keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    std::vector<flowmeter::FeatureVector> sampled;
    for (auto i : keep) sampled.push_back(rows[i]);
    rows = std::move(sampled);
  }
  flowmeter::write_feature_csv(rows, run.path("features.csv"), run.preamble);
  std::cout << "flows=" << assembled.flows.size() << " written=" << rows.size()
            << " rejected_rows=" << assembled.rejected_rows << '\n';
}

std::vector<dataprep::Importance> importance_flags(const Run& run, const dataprep::Dataset& ds) {
  std::vector<dataprep::Importance> flags(ds.cols(), dataprep::Importance::Low);
  if (auto list = run.cfg.raw("prep.high_importance")) {
    for (auto name : sdnguard::split(*list, ',')) {
      name = trim_view(name);
      if (name.empty()) continue;
      bool found = false;
      for (std::size_t c = 0; c < ds.cols(); ++c) {
        if (ds.columns[c].name == name) {
          flags[c] = dataprep::Importance::High;
          found = true;
        }
      }
      if (!found) fail(ErrorKind::Config, kModule, "prep.high_importance: unknown column '" + std::string(name) + "'");
    }
  }
  return flags;
}

void cmd_prep(const Run& run) {
  const auto input = input_path(run, "prep.input");
  const double frac = fraction_key(run, "prep.train_fraction", 0.7);
  const double subsample = run.cfg.get_double("prep.subsample", 1.0);
  if (!(subsample > 0 && subsample <= 1)) fail(ErrorKind::Config, kModule, "prep.subsample must lie in (0, 1]");
  (void)run.cfg.raw("prep.high_importance");
  ready(run);

  dataprep::LoadReport load;
  auto ds = dataprep::load_csv(input, {}, &load);
  if (subsample < 1) {
    // Stratified: the same per-class routine as the split keeps class ratios.
    ds = dataprep::split(ds, subsample, derive_seed(run.seed, "subsample")).train;
  }
  dataprep::CleanReport clean;
  ds = dataprep::clean(ds, importance_flags(run, ds), &clean);
  ds = dataprep::align_columns(ds, flowmeter::kFeatureNames);
  auto sp = dataprep::split(ds, frac, derive_seed(run.seed, "split"));
  for (const auto& w : sp.warnings) progress(run, "warning: " + w);
  auto [train, stats] = dataprep::normalize(sp.train);
  const auto test = dataprep::apply_normalization(sp.test, stats);
  dataprep::save_csv(train, run.path("train.csv"), run.preamble);
  dataprep::save_csv(test, run.path("test.csv"), run.preamble);
  dataprep::save_stats(stats, run.path("stats.csv"), run.preamble);

  json classes = json::object();
  for (const auto& [c, n] : sp.train.class_counts()) classes[c]["train"] = n;
  for (const auto& [c, n] : sp.test.class_counts()) classes[c]["test"] = n;
  write_json(run, "prep_report.json",
             {{"rows_read", load.rows_read},
              {"rows_excluded", load.rows_excluded},
              {"absent_features", load.absent_features},
              {"dropped_columns", clean.dropped},
              {"classes", classes},
              {"warnings", sp.warnings}});
  std::cout << "train=" << train.rows() << " test=" << test.rows() << " dropped=" << clean.dropped.size() << '\n';
}

mfdlc::MfdlcConfig model_config(const Run& run, const dataprep::Dataset& train) {
  auto cfg = mfdlc::config_from(run.cfg);
  if (!run.cfg.contains("mfdlc.classes")) cfg.classes = dataprep::class_list(train, mfdlc::kDefaultClasses);
  cfg.validate();
  return cfg;
}

mfdlc::EpochCallback epoch_logger(const Run& run) {
  return [&run](const mfdlc::EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % 10 == 0) {
      std::string msg = "epoch " + std::to_string(r.epoch) + " loss " + format_double(r.mean_loss);
      if (r.val_accuracy) msg += " val_accuracy " + format_double(*r.val_accuracy);
      progress(run, msg);
    }
  };
}

void cmd_train(const Run& run) {
  const auto input = input_path(run, "train.input");
  const auto validation = optional_input(run, "train.validation");
  const auto train = dataprep::load_csv(input);
  const auto cfg = model_config(run, train);
  ready(run);
  std::optional<dataprep::Dataset> val;
  if (validation) val = dataprep::load_csv(*validation);

  auto model = mfdlc::build_model(cfg, derive_seed(run.seed, "model"));
  const auto res = mfdlc::train(model, train, derive_seed(run.seed, "train"), val ? &*val : nullptr,
                                epoch_logger(run));
  mfdlc::save_model(model, run.path("model.txt"), run.preamble);
  mfdlc::write_training_log(res.curve, run.path("training_log.csv"), run.preamble);
  std::cout << "train_accuracy=" << format_double(res.train_accuracy);
  if (!res.curve.empty() && res.curve.back().val_accuracy) {
    std::cout << " val_accuracy=" << format_double(*res.curve.back().val_accuracy);
  }
  std::cout << '\n';
}

void cmd_crossval(const Run& run) {
  const auto input = input_path(run, "crossval.input");
  const auto folds = run.cfg.get_int("crossval.folds", 5);
  const auto train = dataprep::load_csv(input);
  const auto cfg = model_config(run, train);
  ready(run);
  const auto cv = mfdlc::cross_validate(train, cfg, static_cast<int>(folds), run.seed);
  auto out = open_output(run.path("crossval.csv"), kModule);
  write_preamble(out, run.preamble);
  out << "fold,accuracy\n";
  for (std::size_t i = 0; i < cv.fold_accuracy.size(); ++i) out << i << ',' << format_double(cv.fold_accuracy[i]) << '\n';
  out << "mean," << format_double(cv.mean) << "\nstddev," << format_double(cv.stddev) << '\n';
  std::cout << "mean=" << format_double(cv.mean) << " stddev=" << format_double(cv.stddev) << '\n';
}

void cmd_eval(const Run& run) {
  const auto model_path = input_path(run, "eval.model");
  const auto input = input_path(run, "eval.input");
  const auto normal = run.cfg.get_string("eval.normal_class", std::string(pipeline::kNormalLabel));
  const auto model_name = run.cfg.get_string("eval.model_name", "mfdlc");
  const auto dataset_name = run.cfg.get_string("eval.dataset_name", input.stem().string());
  ready(run);

  const auto model = mfdlc::load_model(model_path);
  const auto test = dataprep::load_csv(input);
  const auto probs = mfdlc::predict_batch(model, test);
  const auto preds = mfdlc::predicted_labels(model, probs);
  const auto cm = evalkit::confusion(test.labels, preds, model.config.classes);
  mfdlc::write_predictions(model, test, probs, run.path("predictions.csv"), run.preamble);
  evalkit::write_confusion_csv(cm, run.path("confusion.csv"), run.preamble);
  const std::vector<evalkit::MetricsRow> rows = {
      {model_name, dataset_name, evalkit::binary_metrics(cm, normal, evalkit::Collapse::Lenient)},
      {model_name + "-strict", dataset_name, evalkit::binary_metrics(cm, normal, evalkit::Collapse::Strict)}};
  evalkit::write_metrics_csv(rows, run.path("metrics.csv"), run.preamble);

  const auto recall = evalkit::per_class_recall(cm);
  json per_class = json::object();
  for (std::size_t i = 0; i < cm.classes.size(); ++i) per_class[cm.classes[i]] = metric(recall[i]);
  write_json(run, "eval_summary.json",
             {{"multiclass_accuracy", metric(evalkit::multiclass_accuracy(cm))},
              {"binary_accuracy", metric(rows[0].metrics.accuracy)},
              {"binary_fpr", metric(rows[0].metrics.fpr)},
              {"per_class_recall", per_class}});
  std::cout << "multiclass_accuracy=" << evalkit::format_metric(evalkit::multiclass_accuracy(cm))
            << " binary_accuracy=" << evalkit::format_metric(rows[0].metrics.accuracy) << '\n';
}

void cmd_e2e(const Run& run) {
  const auto sc = pipeline::Scenario::from(run.cfg);
  const auto k = calibration_knobs(run, true);
  pipeline::E2eOptions opt;
  opt.duration = seconds_key(run, "e2e.duration_s", 3610);
  const auto max_flows = run.cfg.get_int("e2e.max_flows", 256);
  if (max_flows <= 0) fail(ErrorKind::Config, kModule, "e2e.max_flows must be positive");
  opt.max_flows_per_window = static_cast<std::size_t>(max_flows);
  opt.mitigate = run.cfg.get_bool("e2e.mitigate", true);
  opt.t_lim = seconds_key(run, "mitigation.t_lim_s", 60);
  const auto model_path = optional_input(run, "e2e.model");
  const auto stats_path = optional_input(run, "e2e.stats");
  if (model_path.has_value() != stats_path.has_value()) {
    fail(ErrorKind::Config, kModule, "e2e.model and e2e.stats go together");
  }
  pipeline::SyntheticOptions syn;
  syn.duration = seconds_key(run, "synthetic.duration_s", 400);
  const auto per_class = run.cfg.get_int("synthetic.per_class", 1000);
  if (per_class <= 0) fail(ErrorKind::Config, kModule, "synthetic.per_class must be positive");
  syn.per_class = static_cast<std::size_t>(per_class);
  const double frac = fraction_key(run, "synthetic.train_fraction", 0.7);
  auto mcfg = mfdlc::config_from(run.cfg);
  if (!run.cfg.contains("mfdlc.classes")) {
    mcfg.classes = {std::string(pipeline::kNormalLabel), std::string(pipeline::kAttackLabel)};
  }
  mcfg.validate();
  ready(run);

  const auto thresholds = obtain_thresholds(run, sc, k);
  pipeline::FineDetector detector;
  json fine_model;
  if (model_path) {
    detector.model = mfdlc::load_model(*model_path);
    detector.stats = dataprep::load_stats(*stats_path);
    fine_model["source"] = model_path->string();
  } else {
    progress(run, "building the synthetic training set");
    const auto ds = pipeline::synthetic_flows(sc, derive_seed(run.seed, "synthetic"), syn);
    const auto sp = dataprep::split(ds, frac, derive_seed(run.seed, "split"));
    auto [train, stats] = dataprep::normalize(sp.train);
    const auto test = dataprep::apply_normalization(sp.test, stats);
    detector.model = mfdlc::build_model(mcfg, derive_seed(run.seed, "model"));
    detector.stats = stats;
    progress(run, "training the fine detector");
    const auto res = mfdlc::train(detector.model, train, derive_seed(run.seed, "train"), &test, epoch_logger(run));
    mfdlc::save_model(detector.model, run.path("model.txt"), run.preamble);
    dataprep::save_stats(stats, run.path("stats.csv"), run.preamble);
    mfdlc::write_training_log(res.curve, run.path("training_log.csv"), run.preamble);
    fine_model = {{"source", "synthetic"},
                  {"train_rows", train.rows()},
                  {"test_rows", test.rows()},
                  {"epochs", mcfg.epochs},
                  {"final_loss", res.curve.empty() ? json(nullptr) : json(res.curve.back().mean_loss)},
                  {"holdout_accuracy", mfdlc::accuracy(detector.model, test)}};
  }
  detector.normal_class = detector.model.config.classes.front();

  progress(run, "replaying the attack scenario with hierarchical detection");
  const auto res = pipeline::run_e2e(sc, thresholds, detector, run.seed, opt);
  const auto& s = res.summary;
  portwatch::write_window_csv(res.reports, run.path("windows.csv"), run.preamble);
  mitigation::write_rules_csv(s.rules, run.path("rules.csv"), run.preamble);
  json by_switch = json::object();
  for (const auto& [sw, n] : s.confirmed_by_switch) by_switch[std::to_string(sw)] = n;
  write_json(run, "e2e_summary.json",
             {{"attacked_switches", s.coarse.attacked_switches},
              {"thresholds", thresholds_json(thresholds)},
              {"coarse", coarse_json(s.coarse)},
              {"fine",
               {{"invocations", s.fine_invocations},
                {"flows_classified", s.flows_classified},
                {"flows_abnormal", s.flows_abnormal},
                {"confirmed_windows", s.confirmed_windows},
                {"confirmed_by_switch", by_switch}}},
              {"fine_model", fine_model},
              {"mitigation",
               {{"enabled", opt.mitigate},
                {"t_lim_s", static_cast<double>(opt.t_lim) / kMicrosPerSecond},
                {"rules", s.rules.size()},
                {"mitigated_attack_windows", s.mitigated_windows}}}});
  std::cout << "attacked_switches=";
  for (std::size_t i = 0; i < s.coarse.attacked_switches.size(); ++i) {
    std::cout << (i ? "," : "") << s.coarse.attacked_switches[i];
  }
  std::cout << " coarse_recall=" << evalkit::format_metric(s.coarse.recall())
            << " coarse_fpr=" << evalkit::format_metric(s.coarse.false_positive_rate()) << " rules=" << s.rules.size()
            << '\n';
}

void cmd_mitigate_demo(const Run& run) {
  const auto sc = pipeline::Scenario::from(run.cfg);
  const auto k = calibration_knobs(run, false);
  const Micros duration = seconds_key(run, "mitigate.duration_s", 150);
  const Micros t_lim = seconds_key(run, "mitigation.t_lim_s", 60);
  ready(run);
  const auto r = pipeline::run_mitigation_replay(sc, run.seed, duration, t_lim, k.duration, k.quantile);
  mitigation::write_rules_csv(r.rules, run.path("rules.csv"), run.preamble);
  write_json(run, "mitigation_summary.json",
             {{"thresholds", thresholds_json(r.thresholds)},
              {"trigger_window", r.trigger_window ? json(*r.trigger_window) : json(nullptr)},
              {"rules", r.rules.size()},
              {"covered_burst_windows", r.covered_bursts},
              {"ruled_port_packet_in", r.ruled_packet_in},
              {"ruled_port_packet_in_without_rule", r.ruled_packet_in_rule_off},
              {"victim_packet_in", r.victim_packet_in},
              {"victim_packet_in_attack_free", r.victim_packet_in_baseline},
              {"mitigation_drops", r.mitigation_drops},
              {"compared_port_windows", r.compared_port_windows},
              {"differing_port_windows", r.differing_port_windows},
              {"expiry_window", r.expiry_window},
              {"converged_from_window", r.converged_from ? json(*r.converged_from) : json(nullptr)}});
  std::cout << "rules=" << r.rules.size() << " ruled_port_packet_in=" << r.ruled_packet_in
            << " (without rule " << r.ruled_packet_in_rule_off << ") differing_port_windows="
            << r.differing_port_windows << '\n';
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Io:
      return 1;
    case ErrorKind::Divergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical SDN abnormal-traffic detection toolkit"};
  app.require_subcommand(1);
  Options opt;

  struct Entry {
    const char* name;
    const char* help;
    bool stochastic;
    void (*fn)(const Run&);
  };
  const std::vector<Entry> entries = {
      {"simulate", "Replay the network model and dump packets and counters", true, cmd_simulate},
      {"calibrate", "Derive coarse thresholds from an attack-free replay", true, cmd_calibrate},
      {"coarse", "Run the coarse detector over the attack scenario", true, cmd_coarse},
      {"extract", "Assemble flows from a packet CSV and compute features", false, cmd_extract},
      {"prep", "Clean, split and normalize a feature CSV", true, cmd_prep},
      {"train", "Train the classifier", true, cmd_train},
      {"crossval", "k-fold cross-validation on a training CSV", true, cmd_crossval},
      {"eval", "Evaluate a trained model on a test CSV", false, cmd_eval},
      {"e2e", "Coarse detection gating fine detection gating mitigation", true, cmd_e2e},
      {"mitigate-demo", "Rule-on / rule-off / attack-free mitigation replays", true, cmd_mitigate_demo},
  };
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", opt.config, "key = value config file");
    sub->add_option("--seed", opt.seed, "run seed");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--set", opt.sets, "override key=value")->allow_extra_args(false);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (const auto& e : entries) {
    if (!app.got_subcommand(e.name)) continue;
    try {
      const Run run = make_run(e.name, opt, e.stochastic);
      e.fn(run);
      return 0;
    } catch (const Error& err) {
      std::cerr << "sdnguard " << e.name << ": " << err.what() << '\n';
      return exit_code(err.kind());
    } catch (const std::exception& err) {
      std::cerr << "sdnguard " << e.name << ": " << err.what() << '\n';
      return 1;
    }
  }
  return 1;
}
