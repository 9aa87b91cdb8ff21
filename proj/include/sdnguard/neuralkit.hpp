#pragma once

// Small neural-network kernel: dense tensors, a fixed set of layers with
// hand-written forward/backward passes, MSE loss, SGD with L2 decay and a
// text checkpoint format. Everything is double precision and batch-first.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdnguard/rng.hpp"

namespace sdnguard::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_string() const;
};

enum class LayerKind { Conv2d, MaxPool2d, Dropout, Lstm, Dense, Softmax };
enum class Mode { Train, Eval };

std::string_view to_string(LayerKind kind);

/// Conv2d: (N,C,H,W) -> (N,O,H,W), same padding, stride 1, optional ReLU.
/// MaxPool2d: (N,C,H,W) -> (N,C,H/p,W/p) with floor division.
/// Dropout: any shape, inverted scaling in Train mode, identity in Eval.
/// Lstm: (N,T,F) -> (N,H), final hidden state; gate order i, f, g, o.
/// Dense: (N,F) -> (N,O).
/// Softmax: over the last axis.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  bool relu = true;
  int pool = 2;
  double rate = 0.0;
  int input_size = 0;
  int hidden = 0;
  int in_features = 0;
  int out_features = 0;

  static LayerSpec conv2d(std::string name, int in_channels, int out_channels, int kernel = 3,
                          bool relu = true);
  static LayerSpec maxpool2d(std::string name, int pool = 2);
  static LayerSpec dropout(std::string name, double rate);
  static LayerSpec lstm(std::string name, int input_size, int hidden);
  static LayerSpec dense(std::string name, int in_features, int out_features);
  static LayerSpec softmax(std::string name);

  /// Configuration error on non-positive sizes, even kernels or rate outside [0,1).
  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool decay = true;  // biases are exempt from L2
};

struct ParameterSet {
  std::string layer;
  std::vector<Parameter> items;
  /// Bumped by every update; caches remember the version they were built from.
  std::uint64_t version = 0;

  std::size_t count() const;
};

/// Gradient tensors aligned one-to-one with ParameterSet::items.
struct Gradients {
  std::string layer;
  std::vector<Tensor> items;

  /// Elementwise accumulate (shapes must match).
  void add(const Gradients& other);
};

enum class Init { Default, Zero };

/// Conv: He uniform, limit sqrt(6/fan_in). LSTM and dense: uniform with
/// limit sqrt(3/fan_in). Biases start at zero.
ParameterSet init_params(const LayerSpec& spec, Rng& rng, Init init = Init::Default);
Gradients zero_gradients(const ParameterSet& params);

struct Cache {
  std::string layer;
  LayerKind kind = LayerKind::Dense;
  Mode mode = Mode::Eval;
  std::uint64_t params_version = 0;
  bool valid = false;
  Tensor input;
  Tensor output;
  std::vector<Tensor> saved;
  std::vector<std::size_t> indices;
};

struct ForwardResult {
  Tensor output;
  Cache cache;
};

struct BackwardResult {
  Tensor grad_input;
  Gradients grads;
};

/// Shape mismatches are shape errors naming the layer. `seed` drives the
/// dropout mask; other layers ignore it.
ForwardResult forward(const LayerSpec& spec, const ParameterSet& params, const Tensor& input, Mode mode,
                      std::uint64_t seed = 0);

/// A cache from another layer, an invalid cache, or one built before the
/// parameters were last updated is a consistency error.
BackwardResult backward(const LayerSpec& spec, const ParameterSet& params, const Cache& cache,
                        const Tensor& grad_output);

/// w <- w - lr * (g + l2 * w) for decaying parameters, w <- w - lr * g for
/// biases. Non-finite gradients raise a divergence error naming the layer.
void sgd_step(ParameterSet& params, const Gradients& grads, double lr, double l2);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Mean of (pred - target)^2 over all elements; grad = 2 (pred - target) / count.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// Central finite differences of `loss` with respect to `values` (which the
/// callback reads), compared against `analytic`.
struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};
double relative_error(double a, double b, double floor = 1e-6);
GradCheck check_gradient(const std::function<double()>& loss, std::span<double> values,
                         std::span<const double> analytic, double eps = 1e-5);

/// Text checkpoint with hexadecimal floating point values, so save -> load
/// -> save is byte-identical.
void save_parameters(std::span<const ParameterSet> sets, std::ostream& out);
std::vector<ParameterSet> load_parameters(std::istream& in);

}  // namespace sdnguard::nn
