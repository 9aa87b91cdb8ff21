#pragma once

// Oracle comparisons shared by the unit tests and the acceptance run. Each
// returns the worst error observed so callers can apply their own bound.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oracles/atrous_oracle.hpp"
#include "oracles/finite_diff.hpp"
#include "sdnguard/mfdlc.hpp"
#include "sdnguard/neuralkit.hpp"
#include "sdnguard/rng.hpp"
#include "sdnguard/swt.hpp"

namespace checks {

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline std::vector<double> random_vector(sdnguard::Rng& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct SwtReport {
  double oracle_error = 0;       // vs brute-force convolution, all levels
  double constant_detail = 0;    // |detail| for a constant input
  double constant_approx = 0;    // |approx - c * sqrt(2)^n|
  double shift_error = 0;        // decompose(shift x) vs shift(decompose x)
  double linearity_error = 0;    // decompose(a x + b y) vs a dx + b dy
};

inline SwtReport swt_report(std::uint64_t seed, int inputs = 100, std::size_t length = 48) {
  using namespace sdnguard;
  SwtReport r;
  const auto bank = swt::filter_bank("DB4");
  Rng rng(seed);
  for (int i = 0; i < inputs; ++i) {
    const auto x = random_vector(rng, length, -10, 10);
    const auto y = random_vector(rng, length, -10, 10);
    for (int level = 1; level <= 4; ++level) {
      const auto got = swt::decompose(x, level, bank);
      const auto want = oracle::atrous(x, level, bank.lowpass, bank.highpass);
      for (std::size_t b = 0; b < want.size(); ++b) {
        r.oracle_error = std::max(r.oracle_error, max_abs_diff(got.branches.at(b), want[b]));
      }
      const std::size_t s = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(length) - 1));
      std::vector<double> shifted(length);
      for (std::size_t t = 0; t < length; ++t) shifted[(t + s) % length] = x[t];
      const auto gs = swt::decompose(shifted, level, bank);
      for (std::size_t b = 0; b < got.count(); ++b) {
        for (std::size_t t = 0; t < length; ++t) {
          r.shift_error = std::max(r.shift_error, std::abs(gs.branches[b][(t + s) % length] - got.branches[b][t]));
        }
      }
      const double a = rng.uniform(-2, 2), c = rng.uniform(-2, 2);
      std::vector<double> mix(length);
      for (std::size_t t = 0; t < length; ++t) mix[t] = a * x[t] + c * y[t];
      const auto gm = swt::decompose(mix, level, bank);
      const auto gy = swt::decompose(y, level, bank);
      for (std::size_t b = 0; b < got.count(); ++b) {
        for (std::size_t t = 0; t < length; ++t) {
          r.linearity_error = std::max(
              r.linearity_error, std::abs(gm.branches[b][t] - (a * got.branches[b][t] + c * gy.branches[b][t])));
        }
      }
    }
  }
  for (int level = 1; level <= 4; ++level) {
    const double c = 3.25;
    const auto got = swt::decompose(std::vector<double>(length, c), level, bank);
    for (int b = 0; b < level; ++b) {
      for (double v : got.branches[static_cast<std::size_t>(b)]) r.constant_detail = std::max(r.constant_detail, std::abs(v));
    }
    const double expect = c * std::pow(std::sqrt(2.0), level);
    for (double v : got.branches.back()) r.constant_approx = std::max(r.constant_approx, std::abs(v - expect));
  }
  return r;
}

struct GradReport {
  std::string name;
  double max_relative_error = 0;
};

namespace detail {

using namespace sdnguard;

// Loss = sum(output * weights), so dL/doutput = weights.
inline double weighted_sum(const nn::Tensor& out, const std::vector<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

inline GradReport layer_check(const nn::LayerSpec& spec, nn::ParameterSet params, nn::Tensor input,
                              nn::Mode mode, std::uint64_t seed, Rng& rng, double floor) {
  GradReport rep{std::string(nn::to_string(spec.kind)), 0};
  const auto first = nn::forward(spec, params, input, mode, seed);
  const auto w = random_vector(rng, first.output.size());
  nn::Tensor gout(first.output.shape);
  gout.data = w;
  const auto back = nn::backward(spec, params, first.cache, gout);
  auto loss = [&] { return weighted_sum(nn::forward(spec, params, input, mode, seed).output, w); };
  auto fd_in = oracle::central_differences(loss, input.data);
  rep.max_relative_error = oracle::max_relative_error(back.grad_input.data, fd_in, floor);
  for (std::size_t p = 0; p < params.items.size(); ++p) {
    auto fd = oracle::central_differences(loss, params.items[p].value.data);
    rep.max_relative_error =
        std::max(rep.max_relative_error, oracle::max_relative_error(back.grads.items[p].data, fd, floor));
  }
  return rep;
}

}  // namespace detail

/// Full model (wavelet branches, averaging, projection, SoftMax, MSE) in
/// training mode with a fixed dropout seed.
inline GradReport model_gradient_report(std::uint64_t seed, double floor = 1e-6) {
  using namespace sdnguard;
  mfdlc::MfdlcConfig cfg;
  cfg.level = 1;
  cfg.conv1_channels = 2;
  cfg.conv2_channels = 2;
  cfg.lstm_units = 3;
  cfg.classes = {"Normal", "Attack", "Other"};
  auto model = mfdlc::build_model(cfg, seed);
  Rng rng(derive_seed(seed, "data"));
  const std::size_t n = 2;
  const auto rows = random_vector(rng, n * cfg.feature_count(), 0, 1);
  const auto inputs = mfdlc::prepare_inputs(model, rows, n);
  nn::Tensor target({n, cfg.classes.size()});
  target[0] = 1;
  target[cfg.classes.size() + 2] = 1;
  const std::uint64_t drop_seed = 99;
  auto loss = [&] {
    auto f = mfdlc::forward_model(model, inputs, nn::Mode::Train, drop_seed);
    return nn::mse_loss(f.probabilities(), target).loss;
  };
  const auto fwd = mfdlc::forward_model(model, inputs, nn::Mode::Train, drop_seed);
  const auto grads = mfdlc::backward_model(model, fwd, nn::mse_loss(fwd.probabilities(), target).grad);
  GradReport rep{"composed model", 0};
  auto sets = model.parameter_sets();
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t p = 0; p < sets[s]->items.size(); ++p) {
      auto fd = oracle::central_differences(loss, sets[s]->items[p].value.data);
      rep.max_relative_error =
          std::max(rep.max_relative_error, oracle::max_relative_error(grads[s].items[p].data, fd, floor));
    }
  }
  return rep;
}

/// Finite-difference checks of every layer kind plus the composed model.
inline std::vector<GradReport> gradient_reports(std::uint64_t seed, double floor = 1e-6) {
  using namespace sdnguard;
  Rng rng(seed);
  std::vector<GradReport> out;
  auto tensor = [&](std::vector<std::size_t> shape) {
    nn::Tensor t(shape);
    t.data = random_vector(rng, t.size());
    return t;
  };
  {
    const auto spec = nn::LayerSpec::conv2d("conv", 2, 3, 3, true);
    out.push_back(detail::layer_check(spec, nn::init_params(spec, rng), tensor({2, 2, 4, 5}), nn::Mode::Eval, 0,
                                      rng, floor));
    const auto linear = nn::LayerSpec::conv2d("conv-linear", 1, 2, 3, false);
    out.push_back(detail::layer_check(linear, nn::init_params(linear, rng), tensor({1, 1, 8, 6}), nn::Mode::Eval,
                                      0, rng, floor));
    out.back().name = "Conv2d (no ReLU)";
  }
  {
    const auto spec = nn::LayerSpec::maxpool2d("pool", 2);
    out.push_back(detail::layer_check(spec, {}, tensor({2, 2, 5, 4}), nn::Mode::Eval, 0, rng, floor));
  }
  {
    const auto spec = nn::LayerSpec::dropout("drop", 0.3);
    out.push_back(detail::layer_check(spec, {}, tensor({3, 2, 2, 2}), nn::Mode::Train, 17, rng, floor));
  }
  {
    const auto spec = nn::LayerSpec::lstm("lstm", 4, 3);
    out.push_back(detail::layer_check(spec, nn::init_params(spec, rng), tensor({2, 5, 4}), nn::Mode::Eval, 0, rng,
                                      floor));
  }
  {
    const auto spec = nn::LayerSpec::dense("dense", 5, 3);
    out.push_back(detail::layer_check(spec, nn::init_params(spec, rng), tensor({4, 5}), nn::Mode::Eval, 0, rng,
                                      floor));
  }
  {
    const auto spec = nn::LayerSpec::softmax("softmax");
    out.push_back(detail::layer_check(spec, {}, tensor({3, 4}), nn::Mode::Eval, 0, rng, floor));
  }
  {
    // MSE loss gradient.
    auto pred = tensor({3, 2});
    const auto target = tensor({3, 2});
    const auto analytic = nn::mse_loss(pred, target).grad.data;
    auto fd = oracle::central_differences([&] { return nn::mse_loss(pred, target).loss; }, pred.data);
    out.push_back({"MSE", oracle::max_relative_error(analytic, fd, floor)});
  }
  out.push_back(model_gradient_report(derive_seed(seed, "model"), floor));
  return out;
}

}  // namespace checks
