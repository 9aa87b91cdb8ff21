#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "checks.hpp"
#include "sdnguard/mfdlc.hpp"
#include "test_helpers.hpp"

using namespace sdnguard;
using namespace sdnguard::mfdlc;

namespace {

MfdlcConfig small_config() {
  MfdlcConfig c;
  c.level = 1;
  c.conv1_channels = 4;
  c.conv2_channels = 4;
  c.lstm_units = 8;
  c.classes = {"Normal", "Attack"};
  c.learning_rate = 0.1;
  c.l2 = 0.0;
  c.batch_size = 8;
  c.epochs = 10;
  return c;
}

// Two classes that differ in every feature's range.
dataprep::Dataset separable(std::size_t per_class, std::uint64_t seed) {
  dataprep::Dataset ds;
  for (auto name : flowmeter::kFeatureNames) ds.columns.push_back({std::string(name), false, 0});
  Rng rng(seed);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool attack = i % 2 == 1;
    for (std::size_t f = 0; f < flowmeter::kFeatureCount; ++f) {
      ds.values.push_back(attack ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4));
    }
    ds.labels.emplace_back(attack ? "Attack" : "Normal");
    ds.provenance.emplace_back();
  }
  return ds;
}

}  // namespace

TEST_CASE("branch count follows the decomposition level") {
  auto c = small_config();
  for (int n = 0; n <= 4; ++n) {
    c.level = n;
    CHECK(build_model(c, 1).branch_count() == static_cast<std::size_t>(n + 1));
  }
  c.level = 5;
  CHECK(testutil::error_kind([&] { (void)build_model(c, 1); }) == ErrorKind::Config);
  c = small_config();
  c.image_height = 7;
  CHECK(testutil::error_kind([&] { (void)build_model(c, 1); }) == ErrorKind::Config);
}

TEST_CASE("default shapes through one branch") {
  const auto model = build_model(MfdlcConfig{}, 2);
  CHECK(model.branch_count() == 4);
  const auto inputs = prepare_inputs(model, std::vector<double>(48, 0.5), 1);
  const auto f = forward_model(model, inputs, nn::Mode::Eval);
  using S = std::vector<std::size_t>;
  const auto& st = f.branches[0].steps;
  CHECK(st[0].output.shape == S{1, 32, 8, 6});
  CHECK(st[1].output.shape == S{1, 32, 4, 3});
  CHECK(st[2].output.shape == S{1, 32, 4, 3});
  CHECK(st[3].output.shape == S{1, 64, 4, 3});
  CHECK(st[4].output.shape == S{1, 64, 2, 1});
  CHECK(st[6].output.shape == S{1, 128});
  CHECK(f.mean_z.shape == S{1, 128});
  CHECK(f.probabilities().shape == S{1, 7});
}

TEST_CASE("same seed gives the same model; zero weights give zero features") {
  const auto a = build_model(small_config(), 3), b = build_model(small_config(), 3);
  const std::vector<double> x(48, 0.3);
  CHECK(predict(a, x) == predict(b, x));
  CHECK(predict(a, x) != predict(build_model(small_config(), 4), x));

  const auto zero = build_model(small_config(), 3, nn::Init::Zero);
  const auto z = branch_forward(zero, 0, std::vector<double>(48, 0.7));
  for (double v : z) CHECK(v == 0.0);
  const auto p = predict(zero, x);
  CHECK(p[0] == doctest::Approx(0.5));
}

TEST_CASE("softmax output is a distribution") {
  const auto model = build_model(small_config(), 5);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto p = predict(model, checks::random_vector(rng, 48, 0, 1));
    double s = 0;
    for (double v : p) {
      CHECK(v > 0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("composed model gradients match central differences") {
  const auto r = checks::model_gradient_report(derive_seed(61, "model"));
  INFO("max relative error " << r.max_relative_error);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("branches are independent and their order does not matter") {
  auto model = build_model(small_config(), 7);
  Rng rng(7);
  const auto row = checks::random_vector(rng, 48, 0, 1);
  const auto z0 = branch_forward(model, 0, row);
  for (auto& v : model.branches[1].lstm_params.items[0].value.data) v += 0.3;
  CHECK(branch_forward(model, 0, row) == z0);

  auto inputs = prepare_inputs(model, row, 1);
  const auto base = forward_model(model, inputs, nn::Mode::Eval).probabilities().data;
  auto swapped = model;
  std::swap(swapped.branches[0], swapped.branches[1]);
  std::swap(inputs[0], inputs[1]);
  const auto perm = forward_model(swapped, inputs, nn::Mode::Eval).probabilities().data;
  CHECK(checks::max_abs_diff(base, perm) < 1e-15);
}

TEST_CASE("training") {
  const auto train_set = separable(40, 8);
  const auto test_set = separable(20, 9);
  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto c = small_config();
    c.learning_rate = 0.0;
    c.epochs = 1;
    auto model = build_model(c, 8);
    const auto before = model;
    train(model, train_set, 1);
    for (std::size_t b = 0; b < model.branch_count(); ++b) {
      CHECK(model.branches[b].lstm_params.items[0].value.data ==
            before.branches[b].lstm_params.items[0].value.data);
    }
    CHECK(model.projection_params.items[0].value.data == before.projection_params.items[0].value.data);
  }
  SUBCASE("a separable set is learned; training is deterministic") {
    auto m1 = build_model(small_config(), 8);
    auto m2 = build_model(small_config(), 8);
    std::vector<int> epochs_seen;
    const auto r1 = train(m1, train_set, 2, &test_set, [&](const EpochRecord& e) { epochs_seen.push_back(e.epoch); });
    const auto r2 = train(m2, train_set, 2, &test_set);
    CHECK(epochs_seen.size() == 10);
    CHECK(r1.curve.back().mean_loss < r1.curve.front().mean_loss);
    CHECK(accuracy(m1, test_set) >= 0.95);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (std::size_t i = 0; i < r1.curve.size(); ++i) CHECK(r1.curve[i].mean_loss == r2.curve[i].mean_loss);
    CHECK(r1.curve.back().val_accuracy.has_value());
  }
  SUBCASE("input validation") {
    auto model = build_model(small_config(), 8);
    auto bad = train_set;
    bad.values[3] = NAN;
    CHECK(testutil::error_kind([&] { (void)train(model, bad, 1); }) == ErrorKind::Validation);
    auto unknown = train_set;
    unknown.labels[0] = "Web";
    CHECK(testutil::error_kind([&] { (void)train(model, unknown, 1); }) == ErrorKind::Validation);
    CHECK(testutil::error_kind([&] { (void)predict(model, std::vector<double>(47, 0.0)); }) == ErrorKind::Shape);
  }
}

TEST_CASE("cross-validation") {
  auto c = small_config();
  c.epochs = 2;
  const auto ds = separable(15, 10);
  const auto a = cross_validate(ds, c, 3, 11);
  const auto b = cross_validate(ds, c, 3, 11);
  CHECK(a.fold_accuracy.size() == 3);
  CHECK(a.fold_accuracy == b.fold_accuracy);
  const auto [lo, hi] = std::minmax_element(a.fold_accuracy.begin(), a.fold_accuracy.end());
  CHECK(a.mean >= *lo);
  CHECK(a.mean <= *hi);
  CHECK(a.stddev >= 0);
  c.batch_size = 16;
  CHECK(testutil::error_kind([&] { (void)cross_validate(ds, c, 3, 11); }) == ErrorKind::Config);
}

TEST_CASE("model files round-trip") {
  const auto dir = testutil::scratch_dir("mfdlc");
  const auto model = build_model(small_config(), 12);
  save_model(model, dir / "m.txt", std::vector<std::string>{"seed=12"});
  const auto back = load_model(dir / "m.txt");
  CHECK(back.config.to_pairs() == model.config.to_pairs());
  const std::vector<double> x(48, 0.25);
  CHECK(predict(back, x) == predict(model, x));
  save_model(back, dir / "m2.txt", std::vector<std::string>{"seed=12"});
  CHECK(testutil::read_file(dir / "m.txt") == testutil::read_file(dir / "m2.txt"));
  testutil::write_file(dir / "junk.txt", "hello\n");
  CHECK(testutil::error_kind([&] { (void)load_model(dir / "junk.txt"); }) == ErrorKind::Validation);

  const std::vector<EpochRecord> curve = {{1, 0.5, 0.9}, {2, 0.25, std::nullopt}};
  write_training_log(curve, dir / "log.csv");
  const auto log = testutil::read_file(dir / "log.csv");
  CHECK(log.find("1,0.5,0.9") != std::string::npos);
}

TEST_CASE("config keys") {
  const auto c = config_from(KvConfig::parse("mfdlc.level = 2\nmfdlc.classes = Normal,Attack\nmfdlc.l2 = 0\n"));
  CHECK(c.level == 2);
  CHECK(c.classes == std::vector<std::string>{"Normal", "Attack"});
  CHECK(c.l2 == 0.0);
  CHECK(MfdlcConfig{}.l2 == 0.01);
  CHECK(MfdlcConfig{}.learning_rate == 0.01);
  CHECK(MfdlcConfig{}.batch_size == 16);
  CHECK(MfdlcConfig{}.epochs == 100);
}
