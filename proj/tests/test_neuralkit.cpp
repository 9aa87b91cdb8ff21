#include <doctest.h>

#include <cmath>
#include <sstream>

#include "checks.hpp"
#include "oracles/lstm_oracle.hpp"
#include "sdnguard/neuralkit.hpp"
#include "test_helpers.hpp"

using namespace sdnguard;
using namespace sdnguard::nn;

namespace {

Tensor make(std::vector<std::size_t> shape, std::vector<double> data) {
  Tensor t(std::move(shape));
  t.data = std::move(data);
  return t;
}

}  // namespace

TEST_CASE("conv2d with a centre-tap kernel copies its input; same padding keeps shape") {
  auto spec = LayerSpec::conv2d("c", 1, 1, 3, false);
  Rng rng(1);
  auto p = init_params(spec, rng, Init::Zero);
  p.items[0].value[4] = 1.0;  // centre tap
  p.items[1].value[0] = 0.5;
  const auto x = make({1, 1, 2, 3}, {1, -2, 3, -4, 5, -6});
  const auto y = forward(spec, p, x, Mode::Eval).output;
  CHECK(y.shape == x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i] + 0.5);

  auto relu = LayerSpec::conv2d("r", 1, 1, 3, true);
  auto q = p;
  q.layer = "r";
  const auto z = forward(relu, q, x, Mode::Eval).output;
  CHECK(z.data == std::vector<double>{1.5, 0, 3.5, 0, 5.5, 0});

  // All-ones kernel sums the 3x3 neighbourhood with zero padding.
  for (auto& v : p.items[0].value.data) v = 1.0;
  p.items[1].value[0] = 0.0;
  const auto ones = make({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(forward(spec, p, ones, Mode::Eval).output.data == std::vector<double>{10, 10, 10, 10});
  CHECK(testutil::error_kind([&] { (void)forward(spec, p, make({1, 2, 2, 2}, std::vector<double>(8)), Mode::Eval); }) ==
        ErrorKind::Shape);
}

TEST_CASE("max pooling floors odd extents") {
  auto spec = LayerSpec::maxpool2d("p", 2);
  const auto x = make({1, 1, 3, 3}, {1, 5, 2, 3, 4, 9, 7, 8, 6});
  const auto y = forward(spec, {}, x, Mode::Eval);
  CHECK(y.output.shape == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(y.output[0] == 5);
  const auto g = backward(spec, {}, y.cache, make({1, 1, 1, 1}, {2.0}));
  CHECK(g.grad_input.data == std::vector<double>{0, 2, 0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("dropout: identity in eval, inverted scaling in train") {
  auto spec = LayerSpec::dropout("d", 0.5);
  Tensor x({1000}, 1.0);
  CHECK(forward(spec, {}, x, Mode::Eval).output.data == x.data);
  const auto y = forward(spec, {}, x, Mode::Train, 7).output;
  std::size_t kept = 0;
  for (double v : y.data) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
  CHECK(forward(spec, {}, x, Mode::Train, 7).output.data == y.data);
  CHECK(testutil::error_kind([] { (void)LayerSpec::dropout("bad", 1.0).validate(); }) == ErrorKind::Config);
}

TEST_CASE("LSTM final hidden state matches a scalar cell") {
  auto spec = LayerSpec::lstm("l", 3, 4);
  Rng rng(3);
  auto p = init_params(spec, rng);
  for (auto& v : p.items[2].value.data) v = rng.uniform(-0.5, 0.5);
  const std::size_t n = 2, t = 5, f = 3;
  Tensor x({n, t, f});
  x.data = checks::random_vector(rng, x.size());
  const auto y = forward(spec, p, x, Mode::Eval).output;
  REQUIRE(y.shape == std::vector<std::size_t>{n, 4});
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> seq(x.data.begin() + static_cast<std::ptrdiff_t>(s * t * f),
                            x.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * t * f));
    const auto h = oracle::lstm_final_hidden(seq, 5, 3, 4, p.items[0].value.data, p.items[1].value.data,
                                             p.items[2].value.data);
    for (std::size_t u = 0; u < 4; ++u) CHECK(std::abs(y[s * 4 + u] - h[u]) < 1e-12);
  }
}

TEST_CASE("dense and softmax") {
  auto spec = LayerSpec::dense("fc", 2, 2);
  Rng rng(4);
  auto p = init_params(spec, rng, Init::Zero);
  p.items[0].value.data = {1, 2, 3, 4};
  p.items[1].value.data = {0.5, -0.5};
  CHECK(forward(spec, p, make({1, 2}, {1, 1}), Mode::Eval).output.data == std::vector<double>{3.5, 6.5});

  const auto sm = forward(LayerSpec::softmax("s"), {}, make({2, 2}, {2, 0, 1000, 1000}), Mode::Eval).output;
  CHECK(sm[0] == doctest::Approx(0.88080).epsilon(1e-5));
  CHECK(sm[1] == doctest::Approx(0.11920).epsilon(1e-4));
  CHECK(sm[2] == doctest::Approx(0.5));
  CHECK(sm[0] + sm[1] == doctest::Approx(1.0));
}

TEST_CASE("every layer's backward pass matches central differences") {
  for (const auto& r : checks::gradient_reports(derive_seed(51, "grad"))) {
    INFO(r.name << " max relative error " << r.max_relative_error);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("backward refuses stale or foreign caches") {
  auto spec = LayerSpec::dense("fc", 2, 2);
  Rng rng(5);
  auto p = init_params(spec, rng);
  const auto x = make({1, 2}, {1, 2});
  const auto fwd = forward(spec, p, x, Mode::Eval);
  const auto g = Tensor({1, 2}, 1.0);
  CHECK_NOTHROW((void)backward(spec, p, fwd.cache, g));
  sgd_step(p, zero_gradients(p), 0.1, 0.0);
  CHECK(testutil::error_kind([&] { (void)backward(spec, p, fwd.cache, g); }) == ErrorKind::Consistency);
  auto other = LayerSpec::dense("other", 2, 2);
  CHECK(testutil::error_kind([&] { (void)backward(other, p, fwd.cache, g); }) == ErrorKind::Consistency);
  CHECK(testutil::error_kind([&] { (void)backward(spec, p, Cache{}, g); }) == ErrorKind::Consistency);
}

TEST_CASE("SGD with L2 decay") {
  ParameterSet p;
  p.layer = "x";
  p.items.push_back({"weight", make({2}, {1.0, -2.0}), true});
  p.items.push_back({"bias", make({1}, {1.0}), false});
  Gradients g;
  g.layer = "x";
  g.items = {make({2}, {0.5, 0.5}), make({1}, {0.5})};
  sgd_step(p, g, 0.1, 0.01);
  CHECK(p.items[0].value[0] == doctest::Approx(1.0 - 0.1 * (0.5 + 0.01 * 1.0)));
  CHECK(p.items[0].value[1] == doctest::Approx(-2.0 - 0.1 * (0.5 - 0.02)));
  CHECK(p.items[1].value[0] == doctest::Approx(0.95));
  CHECK(p.version == 1);
  const auto before = p.items;
  sgd_step(p, g, 0.0, 0.5);
  CHECK(p.items[0].value.data == before[0].value.data);
  g.items[0][0] = NAN;
  CHECK(testutil::error_kind([&] { sgd_step(p, g, 0.1, 0.0); }) == ErrorKind::Divergence);
}

TEST_CASE("mean squared error") {
  const auto r = mse_loss(make({1, 2}, {1, 0}), make({1, 2}, {0, 0}));
  CHECK(r.loss == 0.5);
  CHECK(r.grad.data == std::vector<double>{1.0, 0.0});
  CHECK(testutil::error_kind([] { (void)mse_loss(Tensor({2}), Tensor({3})); }) == ErrorKind::Shape);
}

TEST_CASE("checkpoint round-trip is byte-identical") {
  Rng rng(6);
  std::vector<ParameterSet> sets = {init_params(LayerSpec::conv2d("c", 1, 2), rng),
                                    init_params(LayerSpec::lstm("l", 2, 3), rng),
                                    init_params(LayerSpec::dense("d", 3, 2), rng)};
  std::ostringstream a;
  save_parameters(sets, a);
  std::istringstream in(a.str());
  const auto back = load_parameters(in);
  std::ostringstream b;
  save_parameters(back, b);
  CHECK(a.str() == b.str());
  CHECK(back[1].items[0].value.data == sets[1].items[0].value.data);
  std::istringstream junk("garbage");
  CHECK(testutil::error_kind([&] { (void)load_parameters(junk); }) == ErrorKind::Validation);
}

TEST_CASE("layer spec validation") {
  CHECK(testutil::error_kind([] { LayerSpec::conv2d("c", 1, 1, 2).validate(); }) == ErrorKind::Config);
  CHECK(testutil::error_kind([] { LayerSpec::dense("d", 0, 1).validate(); }) == ErrorKind::Config);
  CHECK_NOTHROW(LayerSpec::lstm("l", 4, 8).validate());
}
