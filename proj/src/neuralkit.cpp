#include "sdnguard/neuralkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "sdnguard/error.hpp"

namespace sdnguard::nn {
namespace {

constexpr std::string_view kModule = "neuralkit";

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using Vec = Eigen::VectorXd;

MapMat as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapMat(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
CMapMat as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapMat(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const LayerSpec& spec, const std::string& what) {
  fail(ErrorKind::Shape, kModule, "layer '" + spec.name + "' (" + std::string(to_string(spec.kind)) +
                                      "): " + what);
}

void expect_rank(const LayerSpec& spec, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    shape_error(spec, "expected rank " + std::to_string(rank) + " input, got " + x.shape_string());
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

// --- conv2d ----------------------------------------------------------------

ForwardResult conv_forward(const LayerSpec& spec, const ParameterSet& p, const Tensor& x) {
  expect_rank(spec, x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != sz(spec.in_channels)) {
    shape_error(spec, "expected " + std::to_string(spec.in_channels) + " input channels, got " +
                          x.shape_string());
  }
  const std::size_t k = sz(spec.kernel), o = sz(spec.out_channels), pad = k / 2;
  const std::size_t hw = h * w, ckk = c * k * k;

  Tensor cols({ckk, n * hw});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols.data.data() + ((ci * k + ki) * k + kj) * n * hw;
        for (std::size_t s = 0; s < n; ++s) {
          const double* plane = x.data.data() + (s * c + ci) * hw;
          for (std::size_t y = 0; y < h; ++y) {
            const auto yy = static_cast<std::ptrdiff_t>(y + ki) - static_cast<std::ptrdiff_t>(pad);
            for (std::size_t xx = 0; xx < w; ++xx) {
              const auto xs = static_cast<std::ptrdiff_t>(xx + kj) - static_cast<std::ptrdiff_t>(pad);
              const bool inside = yy >= 0 && yy < static_cast<std::ptrdiff_t>(h) && xs >= 0 &&
                                  xs < static_cast<std::ptrdiff_t>(w);
              row[s * hw + y * w + xx] =
                  inside ? plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xs)] : 0.0;
            }
          }
        }
      }
    }
  }

  const auto weight = as_mat(p.items[0].value, o, ckk);
  const auto& bias = p.items[1].value;
  Mat z = weight * as_mat(cols, ckk, n * hw);

  ForwardResult r;
  r.output = Tensor({n, o, h, w});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      double* dst = r.output.data.data() + (s * o + oc) * hw;
      const double* src = z.data() + oc * n * hw + s * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = src[i] + bias[oc];
        dst[i] = spec.relu ? std::max(0.0, v) : v;
      }
    }
  }
  r.cache.saved.push_back(std::move(cols));
  return r;
}

BackwardResult conv_backward(const LayerSpec& spec, const ParameterSet& p, const Cache& cache,
                             const Tensor& dy) {
  const Tensor& x = cache.input;
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t k = sz(spec.kernel), o = sz(spec.out_channels), pad = k / 2;
  const std::size_t hw = h * w, ckk = c * k * k;

  Mat d(o, n * hw);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      const std::size_t base = (s * o + oc) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        // ReLU: no gradient where the pre-activation was not positive.
        const bool pass = !spec.relu || cache.output[base + i] > 0.0;
        d(static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(s * hw + i)) = pass ? dy[base + i] : 0.0;
      }
    }
  }

  BackwardResult r;
  r.grads.layer = p.layer;
  Tensor dw({o, c, k, k});
  const auto cols = as_mat(cache.saved[0], ckk, n * hw);
  as_mat(dw, o, ckk).noalias() = d * cols.transpose();
  Tensor db({o});
  for (std::size_t oc = 0; oc < o; ++oc) db[oc] = d.row(static_cast<Eigen::Index>(oc)).sum();
  r.grads.items.push_back(std::move(dw));
  r.grads.items.push_back(std::move(db));

  Mat dcols = as_mat(p.items[0].value, o, ckk).transpose() * d;
  r.grad_input = Tensor(x.shape);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = dcols.data() + ((ci * k + ki) * k + kj) * n * hw;
        for (std::size_t s = 0; s < n; ++s) {
          double* plane = r.grad_input.data.data() + (s * c + ci) * hw;
          for (std::size_t y = 0; y < h; ++y) {
            const auto yy = static_cast<std::ptrdiff_t>(y + ki) - static_cast<std::ptrdiff_t>(pad);
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t xx = 0; xx < w; ++xx) {
              const auto xs = static_cast<std::ptrdiff_t>(xx + kj) - static_cast<std::ptrdiff_t>(pad);
              if (xs < 0 || xs >= static_cast<std::ptrdiff_t>(w)) continue;
              plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xs)] += row[s * hw + y * w + xx];
            }
          }
        }
      }
    }
  }
  return r;
}

// --- maxpool2d -------------------------------------------------------------

ForwardResult pool_forward(const LayerSpec& spec, const Tensor& x) {
  expect_rank(spec, x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), pp = sz(spec.pool);
  const std::size_t oh = h / pp, ow = w / pp;
  if (oh == 0 || ow == 0) shape_error(spec, "input " + x.shape_string() + " is smaller than the pool");
  ForwardResult r;
  r.output = Tensor({n, c, oh, ow});
  r.cache.indices.resize(r.output.size());
  std::size_t out = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++out) {
        std::size_t best = base + (y * pp) * w + xx * pp;
        for (std::size_t i = 0; i < pp; ++i) {
          for (std::size_t j = 0; j < pp; ++j) {
            const std::size_t idx = base + (y * pp + i) * w + xx * pp + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        r.output[out] = x[best];
        r.cache.indices[out] = best;
      }
    }
  }
  return r;
}

BackwardResult pool_backward(const Cache& cache, const Tensor& dy) {
  BackwardResult r;
  r.grad_input = Tensor(cache.input.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) r.grad_input[cache.indices[i]] += dy[i];
  return r;
}

// --- dropout ---------------------------------------------------------------

ForwardResult dropout_forward(const LayerSpec& spec, const Tensor& x, Mode mode, std::uint64_t seed) {
  ForwardResult r;
  if (mode == Mode::Eval || spec.rate == 0.0) {
    r.output = x;
    return r;
  }
  Rng rng(seed);
  const double keep = 1.0 - spec.rate;
  Tensor mask(x.shape);
  r.output = Tensor(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    r.output[i] = x[i] * mask[i];
  }
  r.cache.saved.push_back(std::move(mask));
  return r;
}

BackwardResult dropout_backward(const Cache& cache, const Tensor& dy) {
  BackwardResult r;
  r.grad_input = dy;
  if (!cache.saved.empty()) {
    for (std::size_t i = 0; i < dy.size(); ++i) r.grad_input[i] *= cache.saved[0][i];
  }
  return r;
}

// --- lstm ------------------------------------------------------------------

// saved[0]: activated gates (T, N, 4H); saved[1]: cell states (T+1, N, H);
// saved[2]: hidden states (T+1, N, H). Index 0 holds the zero initial state.
ForwardResult lstm_forward(const LayerSpec& spec, const ParameterSet& p, const Tensor& x) {
  expect_rank(spec, x, 3);
  const std::size_t n = x.dim(0), t_len = x.dim(1), f = x.dim(2), hd = sz(spec.hidden);
  if (f != sz(spec.input_size)) {
    shape_error(spec, "expected feature size " + std::to_string(spec.input_size) + ", got " + x.shape_string());
  }
  if (t_len == 0) shape_error(spec, "empty sequence");
  const auto wih = as_mat(p.items[0].value, 4 * hd, f);
  const auto whh = as_mat(p.items[1].value, 4 * hd, hd);
  const Eigen::Map<const Eigen::RowVectorXd> bias(p.items[2].value.data.data(), static_cast<Eigen::Index>(4 * hd));

  Tensor gates({t_len, n, 4 * hd});
  Tensor cells({t_len + 1, n, hd});
  Tensor hidden({t_len + 1, n, hd});
  Mat xt(n, f);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < f; ++j) {
        xt(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = x[(s * t_len + t) * f + j];
      }
    }
    Mat z = xt * wih.transpose();
    z.noalias() += as_mat(hidden, (t_len + 1) * n, hd).middleRows(static_cast<Eigen::Index>(t * n),
                                                                   static_cast<Eigen::Index>(n)) *
                   whh.transpose();
    z.rowwise() += bias;
    for (std::size_t s = 0; s < n; ++s) {
      double* g = gates.data.data() + (t * n + s) * 4 * hd;
      const double* c_prev = cells.data.data() + (t * n + s) * hd;
      double* c_next = cells.data.data() + ((t + 1) * n + s) * hd;
      double* h_next = hidden.data.data() + ((t + 1) * n + s) * hd;
      for (std::size_t u = 0; u < hd; ++u) {
        const auto row = static_cast<Eigen::Index>(s);
        const double ig = sigmoid(z(row, static_cast<Eigen::Index>(u)));
        const double fg = sigmoid(z(row, static_cast<Eigen::Index>(hd + u)));
        const double gg = std::tanh(z(row, static_cast<Eigen::Index>(2 * hd + u)));
        const double og = sigmoid(z(row, static_cast<Eigen::Index>(3 * hd + u)));
        g[u] = ig;
        g[hd + u] = fg;
        g[2 * hd + u] = gg;
        g[3 * hd + u] = og;
        c_next[u] = fg * c_prev[u] + ig * gg;
        h_next[u] = og * std::tanh(c_next[u]);
      }
    }
  }
  ForwardResult r;
  r.output = Tensor({n, hd});
  std::copy(hidden.data.begin() + static_cast<std::ptrdiff_t>(t_len * n * hd), hidden.data.end(),
            r.output.data.begin());
  r.cache.saved = {std::move(gates), std::move(cells), std::move(hidden)};
  return r;
}

BackwardResult lstm_backward(const LayerSpec& spec, const ParameterSet& p, const Cache& cache,
                             const Tensor& dy) {
  const Tensor& x = cache.input;
  const std::size_t n = x.dim(0), t_len = x.dim(1), f = x.dim(2), hd = sz(spec.hidden);
  const auto wih = as_mat(p.items[0].value, 4 * hd, f);
  const auto whh = as_mat(p.items[1].value, 4 * hd, hd);
  const Tensor& gates = cache.saved[0];
  const Tensor& cells = cache.saved[1];
  const Tensor& hidden = cache.saved[2];

  BackwardResult r;
  r.grads.layer = p.layer;
  Tensor dwih({4 * hd, f}), dwhh({4 * hd, hd}), db({4 * hd});
  r.grad_input = Tensor(x.shape);

  Mat dh = as_mat(dy, n, hd);
  Mat dc = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(hd));
  Mat dz(n, 4 * hd);
  Mat xt(n, f);
  for (std::size_t t = t_len; t-- > 0;) {
    for (std::size_t s = 0; s < n; ++s) {
      const double* g = gates.data.data() + (t * n + s) * 4 * hd;
      const double* c_prev = cells.data.data() + (t * n + s) * hd;
      const double* c_cur = cells.data.data() + ((t + 1) * n + s) * hd;
      const auto row = static_cast<Eigen::Index>(s);
      for (std::size_t u = 0; u < hd; ++u) {
        const auto col = static_cast<Eigen::Index>(u);
        const double ig = g[u], fg = g[hd + u], gg = g[2 * hd + u], og = g[3 * hd + u];
        const double tc = std::tanh(c_cur[u]);
        const double dho = dh(row, col);
        const double dct = dc(row, col) + dho * og * (1.0 - tc * tc);
        dz(row, col) = dct * gg * ig * (1.0 - ig);
        dz(row, static_cast<Eigen::Index>(hd + u)) = dct * c_prev[u] * fg * (1.0 - fg);
        dz(row, static_cast<Eigen::Index>(2 * hd + u)) = dct * ig * (1.0 - gg * gg);
        dz(row, static_cast<Eigen::Index>(3 * hd + u)) = dho * tc * og * (1.0 - og);
        dc(row, col) = dct * fg;
      }
      for (std::size_t j = 0; j < f; ++j) {
        xt(row, static_cast<Eigen::Index>(j)) = x[(s * t_len + t) * f + j];
      }
    }
    const auto h_prev = as_mat(hidden, (t_len + 1) * n, hd).middleRows(static_cast<Eigen::Index>(t * n),
                                                                        static_cast<Eigen::Index>(n));
    as_mat(dwih, 4 * hd, f).noalias() += dz.transpose() * xt;
    as_mat(dwhh, 4 * hd, hd).noalias() += dz.transpose() * h_prev;
    for (std::size_t j = 0; j < 4 * hd; ++j) db[j] += dz.col(static_cast<Eigen::Index>(j)).sum();
    Mat dx = dz * wih;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < f; ++j) {
        r.grad_input[(s * t_len + t) * f + j] = dx(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
      }
    }
    dh = dz * whh;
  }
  r.grads.items = {std::move(dwih), std::move(dwhh), std::move(db)};
  return r;
}

// --- dense -----------------------------------------------------------------

ForwardResult dense_forward(const LayerSpec& spec, const ParameterSet& p, const Tensor& x) {
  expect_rank(spec, x, 2);
  const std::size_t n = x.dim(0), fi = x.dim(1), fo = sz(spec.out_features);
  if (fi != sz(spec.in_features)) {
    shape_error(spec, "expected " + std::to_string(spec.in_features) + " features, got " + x.shape_string());
  }
  ForwardResult r;
  r.output = Tensor({n, fo});
  auto y = as_mat(r.output, n, fo);
  y.noalias() = as_mat(x, n, fi) * as_mat(p.items[0].value, fo, fi).transpose();
  const Eigen::Map<const Eigen::RowVectorXd> bias(p.items[1].value.data.data(), static_cast<Eigen::Index>(fo));
  y.rowwise() += bias;
  return r;
}

BackwardResult dense_backward(const LayerSpec& spec, const ParameterSet& p, const Cache& cache,
                              const Tensor& dy) {
  const std::size_t n = cache.input.dim(0), fi = sz(spec.in_features), fo = sz(spec.out_features);
  BackwardResult r;
  r.grads.layer = p.layer;
  Tensor dw({fo, fi}), db({fo});
  const auto g = as_mat(dy, n, fo);
  as_mat(dw, fo, fi).noalias() = g.transpose() * as_mat(cache.input, n, fi);
  for (std::size_t j = 0; j < fo; ++j) db[j] = g.col(static_cast<Eigen::Index>(j)).sum();
  r.grads.items = {std::move(dw), std::move(db)};
  r.grad_input = Tensor(cache.input.shape);
  as_mat(r.grad_input, n, fi).noalias() = g * as_mat(p.items[0].value, fo, fi);
  return r;
}

// --- softmax ---------------------------------------------------------------

ForwardResult softmax_forward(const LayerSpec& spec, const Tensor& x) {
  if (x.rank() == 0 || x.shape.back() == 0) shape_error(spec, "empty input");
  const std::size_t c = x.shape.back(), rows = x.size() / c;
  ForwardResult r;
  r.output = Tensor(x.shape);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = x.data.data() + i * c;
    double* out = r.output.data.data() + i * c;
    const double peak = *std::max_element(in, in + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += out[j] = std::exp(in[j] - peak);
    for (std::size_t j = 0; j < c; ++j) out[j] /= total;
  }
  return r;
}

BackwardResult softmax_backward(const Cache& cache, const Tensor& dy) {
  const Tensor& y = cache.output;
  const std::size_t c = y.shape.back(), rows = y.size() / c;
  BackwardResult r;
  r.grad_input = Tensor(y.shape);
  for (std::size_t i = 0; i < rows; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += dy[i * c + j] * y[i * c + j];
    for (std::size_t j = 0; j < c; ++j) r.grad_input[i * c + j] = y[i * c + j] * (dy[i * c + j] - dot);
  }
  return r;
}

void check_params(const LayerSpec& spec, const ParameterSet& p) {
  std::vector<std::vector<std::size_t>> want;
  switch (spec.kind) {
    case LayerKind::Conv2d:
      want = {{sz(spec.out_channels), sz(spec.in_channels), sz(spec.kernel), sz(spec.kernel)},
              {sz(spec.out_channels)}};
      break;
    case LayerKind::Lstm:
      want = {{4 * sz(spec.hidden), sz(spec.input_size)}, {4 * sz(spec.hidden), sz(spec.hidden)}, {4 * sz(spec.hidden)}};
      break;
    case LayerKind::Dense:
      want = {{sz(spec.out_features), sz(spec.in_features)}, {sz(spec.out_features)}};
      break;
    default: break;
  }
  if (p.items.size() != want.size()) shape_error(spec, "parameter count mismatch");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (p.items[i].value.shape != want[i]) {
      shape_error(spec, "parameter '" + p.items[i].name + "' has shape " + p.items[i].value.shape_string());
    }
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  data.assign(count, fill);
}

std::string Tensor::shape_string() const {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
  return out + ")";
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(std::string name, int in_channels, int out_channels, int kernel, bool relu) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.name = std::move(name);
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.relu = relu;
  s.validate();
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::string name, int pool) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.name = std::move(name);
  s.pool = pool;
  s.validate();
  return s;
}

LayerSpec LayerSpec::dropout(std::string name, double rate) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.name = std::move(name);
  s.rate = rate;
  s.validate();
  return s;
}

LayerSpec LayerSpec::lstm(std::string name, int input_size, int hidden) {
  LayerSpec s;
  s.kind = LayerKind::Lstm;
  s.name = std::move(name);
  s.input_size = input_size;
  s.hidden = hidden;
  s.validate();
  return s;
}

LayerSpec LayerSpec::dense(std::string name, int in_features, int out_features) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.name = std::move(name);
  s.in_features = in_features;
  s.out_features = out_features;
  s.validate();
  return s;
}

LayerSpec LayerSpec::softmax(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::Softmax;
  s.name = std::move(name);
  return s;
}

void LayerSpec::validate() const {
  auto bad = [&](const std::string& what) {
    fail(ErrorKind::Config, kModule, "layer '" + name + "': " + what);
  };
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) bad("names must be non-empty without spaces");
  switch (kind) {
    case LayerKind::Conv2d:
      if (in_channels <= 0 || out_channels <= 0) bad("channel counts must be positive");
      if (kernel <= 0 || kernel % 2 == 0) bad("kernel must be odd and positive for same padding");
      break;
    case LayerKind::MaxPool2d:
      if (pool <= 0) bad("pool size must be positive");
      break;
    case LayerKind::Dropout:
      if (!(rate >= 0.0 && rate < 1.0)) bad("dropout rate must lie in [0, 1)");
      break;
    case LayerKind::Lstm:
      if (input_size <= 0 || hidden <= 0) bad("sizes must be positive");
      break;
    case LayerKind::Dense:
      if (in_features <= 0 || out_features <= 0) bad("sizes must be positive");
      break;
    case LayerKind::Softmax: break;
  }
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& p : items) n += p.value.size();
  return n;
}

void Gradients::add(const Gradients& other) {
  if (other.items.size() != items.size()) {
    fail(ErrorKind::Shape, kModule, "gradient sets for '" + layer + "' do not align");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].same_shape(other.items[i])) {
      fail(ErrorKind::Shape, kModule, "gradient shapes for '" + layer + "' do not align");
    }
    for (std::size_t j = 0; j < items[i].size(); ++j) items[i][j] += other.items[i][j];
  }
}

ParameterSet init_params(const LayerSpec& spec, Rng& rng, Init init) {
  spec.validate();
  ParameterSet p;
  p.layer = spec.name;
  auto fill = [&](Tensor& t, double limit) {
    if (init == Init::Zero) return;
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
  };
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      Tensor w({sz(spec.out_channels), sz(spec.in_channels), sz(spec.kernel), sz(spec.kernel)});
      fill(w, std::sqrt(6.0 / (spec.in_channels * spec.kernel * spec.kernel)));
      p.items.push_back({"weight", std::move(w), true});
      p.items.push_back({"bias", Tensor({sz(spec.out_channels)}), false});
      break;
    }
    case LayerKind::Lstm: {
      Tensor wih({4 * sz(spec.hidden), sz(spec.input_size)});
      Tensor whh({4 * sz(spec.hidden), sz(spec.hidden)});
      fill(wih, std::sqrt(3.0 / spec.input_size));
      fill(whh, std::sqrt(3.0 / spec.hidden));
      p.items.push_back({"weight_ih", std::move(wih), true});
      p.items.push_back({"weight_hh", std::move(whh), true});
      p.items.push_back({"bias", Tensor({4 * sz(spec.hidden)}), false});
      break;
    }
    case LayerKind::Dense: {
      Tensor w({sz(spec.out_features), sz(spec.in_features)});
      fill(w, std::sqrt(3.0 / spec.in_features));
      p.items.push_back({"weight", std::move(w), true});
      p.items.push_back({"bias", Tensor({sz(spec.out_features)}), false});
      break;
    }
    default: break;
  }
  return p;
}

Gradients zero_gradients(const ParameterSet& params) {
  Gradients g;
  g.layer = params.layer;
  for (const auto& p : params.items) g.items.emplace_back(p.value.shape);
  return g;
}

ForwardResult forward(const LayerSpec& spec, const ParameterSet& params, const Tensor& input, Mode mode,
                      std::uint64_t seed) {
  check_params(spec, params);
  ForwardResult r;
  switch (spec.kind) {
    case LayerKind::Conv2d: r = conv_forward(spec, params, input); break;
    case LayerKind::MaxPool2d: r = pool_forward(spec, input); break;
    case LayerKind::Dropout: r = dropout_forward(spec, input, mode, seed); break;
    case LayerKind::Lstm: r = lstm_forward(spec, params, input); break;
    case LayerKind::Dense: r = dense_forward(spec, params, input); break;
    case LayerKind::Softmax: r = softmax_forward(spec, input); break;
  }
  r.cache.layer = spec.name;
  r.cache.kind = spec.kind;
  r.cache.mode = mode;
  r.cache.params_version = params.version;
  r.cache.valid = true;
  r.cache.input = input;
  if (spec.kind == LayerKind::Conv2d || spec.kind == LayerKind::Softmax) r.cache.output = r.output;
  return r;
}

BackwardResult backward(const LayerSpec& spec, const ParameterSet& params, const Cache& cache,
                        const Tensor& grad_output) {
  if (!cache.valid || cache.layer != spec.name || cache.kind != spec.kind) {
    fail(ErrorKind::Consistency, kModule, "cache does not belong to layer '" + spec.name + "'");
  }
  if (cache.params_version != params.version) {
    fail(ErrorKind::Consistency, kModule,
         "stale cache for layer '" + spec.name + "': parameters changed since the forward pass");
  }
  check_params(spec, params);
  BackwardResult r;
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const std::vector<std::size_t> want{cache.input.dim(0), sz(spec.out_channels), cache.input.dim(2),
                                          cache.input.dim(3)};
      if (grad_output.shape != want) shape_error(spec, "gradient shape " + grad_output.shape_string());
      r = conv_backward(spec, params, cache, grad_output);
      break;
    }
    case LayerKind::MaxPool2d:
      if (grad_output.size() != cache.indices.size()) shape_error(spec, "gradient shape " + grad_output.shape_string());
      r = pool_backward(cache, grad_output);
      break;
    case LayerKind::Dropout:
      if (!grad_output.same_shape(cache.input)) shape_error(spec, "gradient shape " + grad_output.shape_string());
      r = dropout_backward(cache, grad_output);
      break;
    case LayerKind::Lstm:
      if (grad_output.shape != std::vector<std::size_t>{cache.input.dim(0), sz(spec.hidden)}) {
        shape_error(spec, "gradient shape " + grad_output.shape_string());
      }
      r = lstm_backward(spec, params, cache, grad_output);
      break;
    case LayerKind::Dense:
      if (grad_output.shape != std::vector<std::size_t>{cache.input.dim(0), sz(spec.out_features)}) {
        shape_error(spec, "gradient shape " + grad_output.shape_string());
      }
      r = dense_backward(spec, params, cache, grad_output);
      break;
    case LayerKind::Softmax:
      if (!grad_output.same_shape(cache.output)) shape_error(spec, "gradient shape " + grad_output.shape_string());
      r = softmax_backward(cache, grad_output);
      break;
  }
  r.grads.layer = params.layer;
  return r;
}

void sgd_step(ParameterSet& params, const Gradients& grads, double lr, double l2) {
  if (grads.items.size() != params.items.size()) {
    fail(ErrorKind::Shape, kModule, "gradients do not match parameters of '" + params.layer + "'");
  }
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    if (!grads.items[i].same_shape(params.items[i].value)) {
      fail(ErrorKind::Shape, kModule, "gradient for '" + params.layer + "." + params.items[i].name +
                                          "' has shape " + grads.items[i].shape_string());
    }
    for (double g : grads.items[i].data) {
      if (!std::isfinite(g)) {
        fail(ErrorKind::Divergence, kModule,
             "non-finite gradient in layer '" + params.layer + "' (" + params.items[i].name + ")");
      }
    }
  }
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    auto& w = params.items[i].value.data;
    const auto& g = grads.items[i].data;
    const double decay = params.items[i].decay ? l2 : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * (g[j] + decay * w[j]);
  }
  ++params.version;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    fail(ErrorKind::Shape, kModule,
         "mse: prediction " + pred.shape_string() + " vs target " + target.shape_string());
  }
  if (pred.size() == 0) fail(ErrorKind::Shape, kModule, "mse: empty tensors");
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double count = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / count;
  }
  r.loss /= count;
  return r;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheck check_gradient(const std::function<double()>& loss, std::span<double> values,
                         std::span<const double> analytic, double eps) {
  if (values.size() != analytic.size()) fail(ErrorKind::Shape, kModule, "gradient check size mismatch");
  GradCheck out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = loss();
    values[i] = saved - eps;
    const double down = loss();
    values[i] = saved;
    const double err = relative_error(analytic[i], (up - down) / (2 * eps));
    if (err > out.max_relative_error) {
      out.max_relative_error = err;
      out.worst_index = i;
    }
  }
  return out;
}

void save_parameters(std::span<const ParameterSet> sets, std::ostream& out) {
  out << "neuralkit-params 1\n" << "layers " << sets.size() << '\n';
  char buf[40];
  for (const auto& set : sets) {
    out << "layer " << set.layer << ' ' << set.items.size() << '\n';
    for (const auto& p : set.items) {
      out << "param " << p.name << ' ' << (p.decay ? 1 : 0) << ' ' << p.value.rank();
      for (auto d : p.value.shape) out << ' ' << d;
      out << '\n';
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", p.value[i]);
        out << buf << ((i + 1) % 8 == 0 || i + 1 == p.value.size() ? '\n' : ' ');
      }
    }
  }
  if (!out) fail(ErrorKind::Io, kModule, "checkpoint write failed");
}

std::vector<ParameterSet> load_parameters(std::istream& in) {
  auto bad = [](const std::string& what) -> void { fail(ErrorKind::Validation, kModule, "checkpoint: " + what); };
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "neuralkit-params" || version != 1) bad("unknown format");
  std::size_t layers = 0;
  if (!(in >> word >> layers) || word != "layers") bad("missing layer count");
  std::vector<ParameterSet> sets(layers);
  for (auto& set : sets) {
    std::size_t count = 0;
    if (!(in >> word >> set.layer >> count) || word != "layer") bad("malformed layer header");
    set.items.resize(count);
    for (auto& p : set.items) {
      int decay = 0;
      std::size_t rank = 0;
      if (!(in >> word >> p.name >> decay >> rank) || word != "param" || rank > 8) bad("malformed param header");
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) {
        if (!(in >> d)) bad("malformed shape");
      }
      p.decay = decay != 0;
      p.value = Tensor(shape);
      for (auto& v : p.value.data) {
        if (!(in >> word)) bad("truncated values for " + set.layer + "." + p.name);
        char* end = nullptr;
        v = std::strtod(word.c_str(), &end);
        if (end != word.c_str() + word.size() || !std::isfinite(v)) bad("bad value '" + word + "'");
      }
    }
  }
  return sets;
}

}  // namespace sdnguard::nn
