#include <doctest.h>

#include <map>

#include "oracles/counting_oracle.hpp"
#include "sdnguard/portwatch.hpp"
#include "test_helpers.hpp"

using namespace sdnguard;
using namespace sdnguard::portwatch;
using simnet::CounterEvent;
using simnet::CounterKind;

namespace {

PortWindowStats window(int sw, std::int64_t idx, std::uint64_t in, std::uint64_t out, std::uint64_t pin) {
  PortWindowStats s;
  s.switch_id = sw;
  s.window_index = idx;
  s.num_flow_in = in;
  s.num_flow_out = out;
  s.num_packet_in = pin;
  return s;
}

Thresholds calibrated(double r1, double r2) {
  Thresholds t;
  t.packet_in_threshold = r1;
  t.flow_io_threshold = r2;
  t.quantile = 0.01;
  t.calibrated = true;
  return t;
}

}  // namespace

TEST_CASE("accumulate tallies events by kind and port") {
  PortWindowStats w;
  w.switch_id = 2;
  w.window_index = 3;
  w = accumulate(w, {3'000'000, 2, 1, CounterKind::FlowIn});
  w = accumulate(w, {3'100'000, 2, 1, CounterKind::PacketIn});
  w = accumulate(w, {3'200'000, 2, 4, CounterKind::PacketIn});
  w = accumulate(w, {3'999'999, 2, 1, CounterKind::FlowOut});
  CHECK(w.num_flow_in == 1);
  CHECK(w.num_flow_out == 1);
  CHECK(w.num_packet_in == 2);
  CHECK(w.packet_in_by_port == std::map<int, std::uint64_t>{{1, 1}, {4, 1}});

  CHECK(testutil::error_kind([&] { (void)accumulate(w, {4'000'000, 2, 1, CounterKind::FlowIn}); }) ==
        ErrorKind::Window);
  CHECK(testutil::error_kind([&] { (void)accumulate(w, {2'999'999, 2, 1, CounterKind::FlowIn}); }) ==
        ErrorKind::Window);
  CHECK(testutil::error_kind([&] { (void)accumulate(w, {3'500'000, 3, 1, CounterKind::FlowIn}); }) ==
        ErrorKind::Window);
}

TEST_CASE("accumulator replay reproduces the simulator's window tallies") {
  simnet::Simulator sim(simnet::Topology::standard(), {}, 21);
  simnet::AttackSpec a;
  a.attacker = make_ipv4(12, 0, 0, 11);
  sim.inject_attack(a);
  WindowAccumulator acc(sim.switch_ids(), kMicrosPerSecond);
  std::vector<PortWindowStats> mine;
  std::vector<simnet::WindowCounters> theirs;
  for (int s = 0; s < 25; ++s) {
    auto r = sim.step(kMicrosPerSecond);
    for (const auto& e : r.counters) acc.add(e, mine);
    acc.advance_to(r.end, mine);
    theirs.insert(theirs.end(), r.closed_windows.begin(), r.closed_windows.end());
  }
  REQUIRE(mine.size() == theirs.size());
  for (std::size_t i = 0; i < mine.size(); ++i) {
    std::uint64_t by_port = 0;
    for (const auto& [port, n] : mine[i].packet_in_by_port) by_port += n;
    CHECK(mine[i].switch_id == theirs[i].switch_id);
    CHECK(mine[i].window_index == theirs[i].window_index);
    CHECK(mine[i].num_flow_in == theirs[i].flows_in);
    CHECK(mine[i].num_flow_out == theirs[i].flows_out);
    CHECK(mine[i].num_packet_in == theirs[i].packet_in);
    CHECK(by_port == mine[i].num_packet_in);
  }
}

TEST_CASE("accumulator rejects out-of-order and foreign events") {
  WindowAccumulator acc({1, 2}, kMicrosPerSecond);
  std::vector<PortWindowStats> closed;
  acc.add({2'500'000, 1, 1, CounterKind::FlowIn}, closed);
  CHECK(closed.size() == 4);  // windows 0 and 1 for both switches
  CHECK(testutil::error_kind([&] { acc.add({2'000'000, 1, 1, CounterKind::FlowIn}, closed); }) ==
        ErrorKind::Ordering);
  CHECK(testutil::error_kind([&] { acc.add({2'600'000, 7, 1, CounterKind::FlowIn}, closed); }) ==
        ErrorKind::Window);
}

TEST_CASE("ratio examples") {
  auto r = compute_ratios(window(1, 0, 10, 9, 5));
  CHECK(r.rate_packet_in == doctest::Approx(2.0));
  CHECK(r.rate_flow_io == doctest::Approx(0.9));
  CHECK_FALSE(r.saturated());

  auto no_pin = compute_ratios(window(1, 0, 10, 10, 0));
  CHECK(no_pin.packet_in_saturated);
  CHECK_FALSE(no_pin.flow_io_saturated);

  auto idle = compute_ratios(window(1, 0, 0, 0, 0));
  CHECK(idle.packet_in_saturated);
  CHECK(idle.flow_io_saturated);
}

TEST_CASE("ratios of a real attack window match long-hand arithmetic") {
  simnet::Simulator sim(simnet::Topology::standard(), {}, 22);
  simnet::AttackSpec a;
  a.attacker = make_ipv4(12, 0, 0, 11);
  sim.inject_attack(a);
  sim.step(10 * kMicrosPerSecond);
  auto r = sim.step(kMicrosPerSecond);
  WindowAccumulator acc(sim.switch_ids(), kMicrosPerSecond);
  std::vector<PortWindowStats> closed;
  std::uint64_t in = 0, out = 0, pin = 0;
  for (const auto& e : r.counters) {
    acc.add(e, closed);
    if (e.switch_id != 1) continue;
    in += e.kind == CounterKind::FlowIn;
    out += e.kind == CounterKind::FlowOut;
    pin += e.kind == CounterKind::PacketIn;
  }
  acc.advance_to(r.end, closed);
  const auto it = std::find_if(closed.begin(), closed.end(),
                               [](const PortWindowStats& s) { return s.switch_id == 1 && s.window_index == 10; });
  REQUIRE(it != closed.end());
  const auto ratios = compute_ratios(*it);
  REQUIRE(pin > 0);
  CHECK(ratios.rate_packet_in == static_cast<double>(in) / static_cast<double>(pin));
  CHECK(ratios.rate_flow_io == static_cast<double>(out) / static_cast<double>(in));
  CHECK(ratios.rate_flow_io < 0.5);
}

TEST_CASE("judge needs both ratios strictly below their thresholds") {
  const auto t = calibrated(4.0, 0.9);
  CHECK(judge({3.9, 0.8}, t) == Verdict::Abnormal);
  CHECK(judge({4.0, 0.8}, t) == Verdict::Normal);  // boundary is not abnormal
  CHECK(judge({3.9, 0.9}, t) == Verdict::Normal);
  CHECK(judge({5.0, 0.1}, t) == Verdict::Normal);
  RatioPair sat{0.0, 0.0, true, false};
  CHECK(judge(sat, t) == Verdict::Normal);
  CHECK(testutil::error_kind([] { (void)judge({1, 1}, Thresholds{}); }) == ErrorKind::Config);
}

TEST_CASE("judge is monotone: lowering a ratio never clears an abnormal verdict") {
  const auto t = calibrated(4.0, 0.9);
  for (double r1 = 0.5; r1 < 6; r1 += 0.25) {
    for (double r2 = 0.05; r2 < 1.2; r2 += 0.05) {
      if (judge({r1, r2}, t) == Verdict::Abnormal) {
        CHECK(judge({r1 * 0.5, r2}, t) == Verdict::Abnormal);
        CHECK(judge({r1, r2 * 0.5}, t) == Verdict::Abnormal);
      }
    }
  }
}

TEST_CASE("calibration") {
  SUBCASE("identical samples give that value") {
    std::vector<RatioPair> v(50, RatioPair{3.0, 0.8});
    const auto t = calibrate_thresholds(v, 0.01);
    CHECK(t.packet_in_threshold == 3.0);
    CHECK(t.flow_io_threshold == 0.8);
    CHECK(t.calibrated);
  }
  SUBCASE("simulated windows match a sort-and-index quantile") {
    simnet::Simulator sim(simnet::Topology::standard(), {}, 23);
    sim.step(10 * kMicrosPerSecond);
    WindowAccumulator acc(sim.switch_ids(), kMicrosPerSecond);
    std::vector<PortWindowStats> closed;
    acc.advance_to(sim.clock(), closed);
    closed.clear();
    std::vector<RatioPair> ratios;
    while (ratios.size() < 1000) {
      auto r = sim.step(kMicrosPerSecond);
      for (const auto& e : r.counters) acc.add(e, closed);
      acc.advance_to(r.end, closed);
      for (const auto& w : closed) ratios.push_back(compute_ratios(w));
      closed.clear();
    }
    ratios.resize(1000);
    std::vector<double> r1, r2;
    std::size_t excluded = 0;
    for (const auto& r : ratios) {
      if (!r.packet_in_saturated) r1.push_back(r.rate_packet_in);
      else ++excluded;
      if (!r.flow_io_saturated) r2.push_back(r.rate_flow_io);
    }
    const auto t = calibrate_thresholds(ratios, 0.01);
    CHECK(t.packet_in_threshold == oracle::sorted_quantile(r1, 0.01));
    CHECK(t.flow_io_threshold == oracle::sorted_quantile(r2, 0.01));
    CHECK(t.excluded_packet_in == excluded);
    CHECK(t.samples == 1000);
  }
  SUBCASE("errors") {
    CHECK(testutil::error_kind([] { (void)calibrate_thresholds({}, 0.01); }) == ErrorKind::Calibration);
    std::vector<RatioPair> sat(100, RatioPair{0, 0, true, true});
    CHECK(testutil::error_kind([&] { (void)calibrate_thresholds(sat, 0.01); }) == ErrorKind::Calibration);
    std::vector<RatioPair> v(50, RatioPair{3.0, 0.8});
    CHECK(testutil::error_kind([&] { (void)calibrate_thresholds(v, 0.0); }) == ErrorKind::Config);
    CHECK(testutil::error_kind([&] { (void)calibrate_thresholds(v, 0.7); }) == ErrorKind::Config);
  }
}

TEST_CASE("debouncer") {
  Debouncer pass(1);
  CHECK(pass.push(1, Verdict::Abnormal) == Verdict::Abnormal);
  Debouncer d(2);
  CHECK(d.push(1, Verdict::Abnormal) == Verdict::Normal);
  CHECK(d.push(2, Verdict::Abnormal) == Verdict::Normal);
  CHECK(d.push(1, Verdict::Abnormal) == Verdict::Abnormal);
  CHECK(d.push(1, Verdict::Normal) == Verdict::Normal);
  CHECK(d.push(1, Verdict::Abnormal) == Verdict::Normal);
  CHECK(testutil::error_kind([] { Debouncer bad(0); }) == ErrorKind::Config);
}

TEST_CASE("window CSV and threshold files round-trip") {
  const auto dir = testutil::scratch_dir("portwatch");
  std::vector<WindowReport> rows;
  for (int i = 0; i < 5; ++i) {
    WindowReport r;
    r.stats = window(1 + i % 2, i, 10u + i, 5, i == 0 ? 0u : 3u);
    r.ratios = compute_ratios(r.stats);
    rows.push_back(r);
  }
  write_window_csv(rows, dir / "w.csv", std::vector<std::string>{"seed=1"});
  const auto back = read_window_csv(dir / "w.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].switch_id == rows[i].stats.switch_id);
    CHECK(back[i].window_index == rows[i].stats.window_index);
    CHECK(back[i].num_flow_in == rows[i].stats.num_flow_in);
    CHECK(back[i].num_packet_in == rows[i].stats.num_packet_in);
  }
  CHECK(testutil::read_file(dir / "w.csv").find("saturated") != std::string::npos);

  const auto t = calibrated(4.0, 0.94736842105263153);
  save_thresholds(t, dir / "t.txt");
  const auto u = load_thresholds(dir / "t.txt");
  CHECK(u.packet_in_threshold == t.packet_in_threshold);
  CHECK(u.flow_io_threshold == t.flow_io_threshold);
  CHECK(u.calibrated);
  CHECK(testutil::error_kind([&] { save_thresholds(Thresholds{}, dir / "x.txt"); }) == ErrorKind::Config);
  testutil::write_file(dir / "bad.csv", "nope\n");
  CHECK(testutil::error_kind([&] { (void)read_window_csv(dir / "bad.csv"); }) == ErrorKind::Validation);
}
