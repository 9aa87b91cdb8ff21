#include "sdnguard/mfdlc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdnguard/error.hpp"
#include "sdnguard/rng.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::mfdlc {
namespace {

constexpr std::string_view kModule = "mfdlc";

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

int pooled(int extent, int pool) { return extent / pool; }

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
  return out;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : sdnguard::split(s, ',')) {
    auto t = trim_view(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

void check_dataset(const MfdlcModel& model, const dataprep::Dataset& ds) {
  ds.validate();
  if (ds.cols() != model.config.feature_count()) {
    fail(ErrorKind::Shape, kModule,
         "dataset has " + std::to_string(ds.cols()) + " columns, model expects " +
             std::to_string(model.config.feature_count()));
  }
  for (double v : ds.values) {
    if (!std::isfinite(v)) fail(ErrorKind::Validation, kModule, "non-finite feature value");
  }
}

// (N,C,H',W') pooled map -> (N, T=H', F=C*W') sequence along the height axis.
nn::Tensor map_to_sequence(const nn::Tensor& m) {
  const std::size_t n = m.dim(0), c = m.dim(1), h = m.dim(2), w = m.dim(3);
  nn::Tensor seq({n, h, c * w});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < h; ++t)
        for (std::size_t x = 0; x < w; ++x)
          seq[(s * h + t) * c * w + ch * w + x] = m[((s * c + ch) * h + t) * w + x];
  return seq;
}

nn::Tensor sequence_to_map(const nn::Tensor& seq, const std::vector<std::size_t>& map_shape) {
  const std::size_t n = map_shape[0], c = map_shape[1], h = map_shape[2], w = map_shape[3];
  nn::Tensor m(map_shape);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < h; ++t)
        for (std::size_t x = 0; x < w; ++x)
          m[((s * c + ch) * h + t) * w + x] = seq[(s * h + t) * c * w + ch * w + x];
  return m;
}

BranchTrace run_branch(const Branch& b, const nn::Tensor& input, nn::Mode mode, std::uint64_t seed) {
  BranchTrace tr;
  tr.steps.reserve(7);
  tr.steps.push_back(nn::forward(b.conv1, b.conv1_params, input, mode));
  tr.steps.push_back(nn::forward(b.pool1, {}, tr.steps.back().output, mode));
  tr.steps.push_back(nn::forward(b.drop1, {}, tr.steps.back().output, mode, derive_seed(seed, b.drop1.name)));
  tr.steps.push_back(nn::forward(b.conv2, b.conv2_params, tr.steps.back().output, mode));
  tr.steps.push_back(nn::forward(b.pool2, {}, tr.steps.back().output, mode));
  tr.steps.push_back(nn::forward(b.drop2, {}, tr.steps.back().output, mode, derive_seed(seed, b.drop2.name)));
  tr.steps.push_back(nn::forward(b.lstm, b.lstm_params, map_to_sequence(tr.steps.back().output), mode));
  return tr;
}

nn::Tensor gather(const nn::Tensor& all, std::span<const std::size_t> idx) {
  const std::size_t per = all.size() / all.dim(0);
  auto shape = all.shape;
  shape[0] = idx.size();
  nn::Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(all.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

void MfdlcConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, kModule, what); };
  if (level < 0 || level > kMaxLevel) bad("wavelet level must lie in [0, " + std::to_string(kMaxLevel) + "]");
  if (image_height <= 0 || image_width <= 0) bad("image shape must be positive");
  if (feature_count() != flowmeter::kFeatureCount) {
    bad("image shape " + std::to_string(image_height) + "x" + std::to_string(image_width) +
        " does not hold " + std::to_string(flowmeter::kFeatureCount) + " features");
  }
  if (pool <= 0 || pooled(pooled(image_height, pool), pool) < 1 || pooled(pooled(image_width, pool), pool) < 1) {
    bad("image shape is too small for two pooling stages");
  }
  if (conv1_channels <= 0 || conv2_channels <= 0 || lstm_units <= 0) bad("layer sizes must be positive");
  if (kernel <= 0 || kernel % 2 == 0) bad("kernel must be odd");
  if (!(dropout1 >= 0 && dropout1 < 1 && dropout2 >= 0 && dropout2 < 1)) bad("dropout rates must lie in [0, 1)");
  if (classes.size() < 2) bad("at least two classes are required");
  if (!(learning_rate >= 0) || !(l2 >= 0)) bad("learning rate and l2 must be >= 0");
  if (batch_size <= 0 || epochs < 0) bad("batch size must be positive and epochs >= 0");
  swt::filter_bank(wavelet);
}

std::vector<std::pair<std::string, std::string>> MfdlcConfig::to_pairs() const {
  return {
      {"mfdlc.batch_size", std::to_string(batch_size)},
      {"mfdlc.class_weighting", class_weighting ? "true" : "false"},
      {"mfdlc.classes", join(classes, ',')},
      {"mfdlc.conv1_channels", std::to_string(conv1_channels)},
      {"mfdlc.conv2_channels", std::to_string(conv2_channels)},
      {"mfdlc.dropout1", format_double(dropout1)},
      {"mfdlc.dropout2", format_double(dropout2)},
      {"mfdlc.epochs", std::to_string(epochs)},
      {"mfdlc.image_height", std::to_string(image_height)},
      {"mfdlc.image_width", std::to_string(image_width)},
      {"mfdlc.kernel", std::to_string(kernel)},
      {"mfdlc.l2", format_double(l2)},
      {"mfdlc.learning_rate", format_double(learning_rate)},
      {"mfdlc.level", std::to_string(level)},
      {"mfdlc.lstm_units", std::to_string(lstm_units)},
      {"mfdlc.pool", std::to_string(pool)},
      {"mfdlc.wavelet", wavelet},
  };
}

MfdlcConfig config_from(const KvConfig& cfg, MfdlcConfig c) {
  c.level = static_cast<int>(cfg.get_int("mfdlc.level", c.level));
  c.wavelet = cfg.get_string("mfdlc.wavelet", c.wavelet);
  c.image_height = static_cast<int>(cfg.get_int("mfdlc.image_height", c.image_height));
  c.image_width = static_cast<int>(cfg.get_int("mfdlc.image_width", c.image_width));
  c.conv1_channels = static_cast<int>(cfg.get_int("mfdlc.conv1_channels", c.conv1_channels));
  c.conv2_channels = static_cast<int>(cfg.get_int("mfdlc.conv2_channels", c.conv2_channels));
  c.kernel = static_cast<int>(cfg.get_int("mfdlc.kernel", c.kernel));
  c.pool = static_cast<int>(cfg.get_int("mfdlc.pool", c.pool));
  c.dropout1 = cfg.get_double("mfdlc.dropout1", c.dropout1);
  c.dropout2 = cfg.get_double("mfdlc.dropout2", c.dropout2);
  c.lstm_units = static_cast<int>(cfg.get_int("mfdlc.lstm_units", c.lstm_units));
  if (auto classes = cfg.raw("mfdlc.classes")) c.classes = split_list(*classes);
  c.learning_rate = cfg.get_double("mfdlc.learning_rate", c.learning_rate);
  c.l2 = cfg.get_double("mfdlc.l2", c.l2);
  c.batch_size = static_cast<int>(cfg.get_int("mfdlc.batch_size", c.batch_size));
  c.epochs = static_cast<int>(cfg.get_int("mfdlc.epochs", c.epochs));
  c.class_weighting = cfg.get_bool("mfdlc.class_weighting", c.class_weighting);
  c.validate();
  return c;
}

std::vector<nn::ParameterSet*> MfdlcModel::parameter_sets() {
  std::vector<nn::ParameterSet*> out;
  for (auto& b : branches) {
    out.push_back(&b.conv1_params);
    out.push_back(&b.conv2_params);
    out.push_back(&b.lstm_params);
  }
  out.push_back(&projection_params);
  return out;
}

std::vector<const nn::ParameterSet*> MfdlcModel::parameter_sets() const {
  std::vector<const nn::ParameterSet*> out;
  for (const auto& b : branches) {
    out.push_back(&b.conv1_params);
    out.push_back(&b.conv2_params);
    out.push_back(&b.lstm_params);
  }
  out.push_back(&projection_params);
  return out;
}

MfdlcModel build_model(const MfdlcConfig& cfg, std::uint64_t seed, nn::Init init) {
  cfg.validate();
  MfdlcModel m;
  m.config = cfg;
  m.filters = swt::filter_bank(cfg.wavelet);
  const int w2 = pooled(pooled(cfg.image_width, cfg.pool), cfg.pool);
  for (int i = 0; i < cfg.level + 1; ++i) {
    const std::string p = "b" + std::to_string(i) + ".";
    Branch b;
    b.conv1 = nn::LayerSpec::conv2d(p + "conv1", 1, cfg.conv1_channels, cfg.kernel, true);
    b.pool1 = nn::LayerSpec::maxpool2d(p + "pool1", cfg.pool);
    b.drop1 = nn::LayerSpec::dropout(p + "drop1", cfg.dropout1);
    b.conv2 = nn::LayerSpec::conv2d(p + "conv2", cfg.conv1_channels, cfg.conv2_channels, cfg.kernel, true);
    b.pool2 = nn::LayerSpec::maxpool2d(p + "pool2", cfg.pool);
    b.drop2 = nn::LayerSpec::dropout(p + "drop2", cfg.dropout2);
    b.lstm = nn::LayerSpec::lstm(p + "lstm", cfg.conv2_channels * w2, cfg.lstm_units);
    // Each branch draws from its own stream so branches stay independent.
    Rng rng(derive_seed(seed, "branch", static_cast<std::uint64_t>(i)));
    b.conv1_params = nn::init_params(b.conv1, rng, init);
    b.conv2_params = nn::init_params(b.conv2, rng, init);
    b.lstm_params = nn::init_params(b.lstm, rng, init);
    m.branches.push_back(std::move(b));
  }
  m.projection = nn::LayerSpec::dense("projection", cfg.lstm_units, static_cast<int>(cfg.classes.size()));
  m.softmax = nn::LayerSpec::softmax("softmax");
  Rng rng(derive_seed(seed, "projection"));
  m.projection_params = nn::init_params(m.projection, rng, init);
  return m;
}

std::vector<nn::Tensor> prepare_inputs(const MfdlcModel& model, std::span<const double> rows, std::size_t n) {
  const std::size_t k = model.config.feature_count();
  if (rows.size() != n * k) fail(ErrorKind::Shape, kModule, "input rows do not hold " + std::to_string(k) + " features");
  const std::size_t h = sz(model.config.image_height), w = sz(model.config.image_width);
  std::vector<nn::Tensor> out(model.branch_count(), nn::Tensor({n, 1, h, w}));
  for (std::size_t s = 0; s < n; ++s) {
    auto set = swt::decompose(rows.subspan(s * k, k), model.config.level, model.filters);
    for (std::size_t b = 0; b < set.count(); ++b) {
      // Row-major reshape into an H x W single-channel image.
      std::copy(set.branches[b].begin(), set.branches[b].end(),
                out[b].data.begin() + static_cast<std::ptrdiff_t>(s * k));
    }
  }
  return out;
}

std::vector<double> branch_forward(const MfdlcModel& model, std::size_t branch, std::span<const double> subsequence,
                                   nn::Mode mode, std::uint64_t seed) {
  if (branch >= model.branch_count()) fail(ErrorKind::Shape, kModule, "branch index out of range");
  const std::size_t h = sz(model.config.image_height), w = sz(model.config.image_width);
  if (subsequence.size() != h * w) {
    fail(ErrorKind::Shape, kModule, "subsequence has length " + std::to_string(subsequence.size()) +
                                        ", expected " + std::to_string(h * w));
  }
  nn::Tensor input({1, 1, h, w});
  std::copy(subsequence.begin(), subsequence.end(), input.data.begin());
  auto tr = run_branch(model.branches[branch], input, mode, seed);
  return tr.steps.back().output.data;
}

ModelForward forward_model(const MfdlcModel& model, const std::vector<nn::Tensor>& inputs, nn::Mode mode,
                           std::uint64_t seed) {
  if (inputs.size() != model.branch_count()) {
    fail(ErrorKind::Shape, kModule, "expected " + std::to_string(model.branch_count()) + " branch inputs");
  }
  ModelForward f;
  const std::size_t n = inputs.front().dim(0), units = sz(model.config.lstm_units);
  f.mean_z = nn::Tensor({n, units});
  const double inv = 1.0 / static_cast<double>(model.branch_count());
  for (std::size_t b = 0; b < model.branch_count(); ++b) {
    f.branches.push_back(run_branch(model.branches[b], inputs[b], mode, derive_seed(seed, "branch", b)));
    const auto& z = f.branches.back().steps.back().output;
    for (std::size_t i = 0; i < z.size(); ++i) f.mean_z[i] += z[i] * inv;
  }
  f.projection = nn::forward(model.projection, model.projection_params, f.mean_z, mode);
  f.softmax = nn::forward(model.softmax, {}, f.projection.output, mode);
  return f;
}

std::vector<nn::Gradients> backward_model(const MfdlcModel& model, const ModelForward& f,
                                          const nn::Tensor& grad_probabilities) {
  auto ds = nn::backward(model.softmax, {}, f.softmax.cache, grad_probabilities);
  auto dp = nn::backward(model.projection, model.projection_params, f.projection.cache, ds.grad_input);
  nn::Tensor dz = dp.grad_input;
  const double inv = 1.0 / static_cast<double>(model.branch_count());
  for (auto& v : dz.data) v *= inv;

  std::vector<nn::Gradients> out;
  for (std::size_t b = 0; b < model.branch_count(); ++b) {
    const auto& br = model.branches[b];
    const auto& st = f.branches[b].steps;
    auto g_lstm = nn::backward(br.lstm, br.lstm_params, st[6].cache, dz);
    auto g = sequence_to_map(g_lstm.grad_input, st[5].output.shape);
    auto g_d2 = nn::backward(br.drop2, {}, st[5].cache, g);
    auto g_p2 = nn::backward(br.pool2, {}, st[4].cache, g_d2.grad_input);
    auto g_c2 = nn::backward(br.conv2, br.conv2_params, st[3].cache, g_p2.grad_input);
    auto g_d1 = nn::backward(br.drop1, {}, st[2].cache, g_c2.grad_input);
    auto g_p1 = nn::backward(br.pool1, {}, st[1].cache, g_d1.grad_input);
    auto g_c1 = nn::backward(br.conv1, br.conv1_params, st[0].cache, g_p1.grad_input);
    out.push_back(std::move(g_c1.grads));
    out.push_back(std::move(g_c2.grads));
    out.push_back(std::move(g_lstm.grads));
  }
  out.push_back(std::move(dp.grads));
  return out;
}

std::vector<double> predict(const MfdlcModel& model, std::span<const double> features) {
  if (features.size() != model.config.feature_count()) {
    fail(ErrorKind::Shape, kModule, "feature vector has length " + std::to_string(features.size()));
  }
  for (double v : features) {
    if (!std::isfinite(v)) fail(ErrorKind::Validation, kModule, "non-finite feature value");
  }
  auto f = forward_model(model, prepare_inputs(model, features, 1), nn::Mode::Eval);
  return f.probabilities().data;
}

std::vector<double> predict_batch(const MfdlcModel& model, const dataprep::Dataset& ds, std::size_t chunk) {
  check_dataset(model, ds);
  const std::size_t k = model.config.feature_count(), c = model.config.classes.size();
  std::vector<double> out;
  out.reserve(ds.rows() * c);
  for (std::size_t start = 0; start < ds.rows(); start += chunk) {
    const std::size_t n = std::min(chunk, ds.rows() - start);
    auto inputs = prepare_inputs(model, std::span<const double>(ds.values).subspan(start * k, n * k), n);
    auto f = forward_model(model, inputs, nn::Mode::Eval);
    out.insert(out.end(), f.probabilities().data.begin(), f.probabilities().data.end());
  }
  return out;
}

std::vector<std::string> predicted_labels(const MfdlcModel& model, std::span<const double> probabilities) {
  const std::size_t c = model.config.classes.size();
  std::vector<std::string> out;
  for (std::size_t i = 0; i + c <= probabilities.size(); i += c) {
    out.push_back(model.config.classes[argmax(probabilities.subspan(i, c))]);
  }
  return out;
}

double accuracy(const MfdlcModel& model, const dataprep::Dataset& ds) {
  if (ds.rows() == 0) return 0.0;
  auto labels = predicted_labels(model, predict_batch(model, ds));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(ds.rows());
}

TrainResult train(MfdlcModel& model, const dataprep::Dataset& train_set, std::uint64_t seed,
                  const dataprep::Dataset* validation, const EpochCallback& on_epoch) {
  const auto& cfg = model.config;
  check_dataset(model, train_set);
  if (train_set.rows() == 0) fail(ErrorKind::Validation, kModule, "empty training set");
  const std::size_t n = train_set.rows(), c = cfg.classes.size();
  const auto targets = dataprep::one_hot(train_set.labels, cfg.classes);
  std::vector<double> weights(n, 1.0);
  if (cfg.class_weighting) {
    auto w = dataprep::class_weights(train_set);
    for (std::size_t i = 0; i < n; ++i) weights[i] = w[train_set.labels[i]];
  }
  // The wavelet front-end is fixed, so every sample is decomposed once.
  const auto inputs = prepare_inputs(model, train_set.values, n);
  const auto sets = model.parameter_sets();

  TrainResult result;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += sz(cfg.batch_size), ++batch_index, ++step) {
      const std::size_t b = std::min(sz(cfg.batch_size), n - start);
      std::span<const std::size_t> idx(order.data() + start, b);
      std::vector<nn::Tensor> batch;
      batch.reserve(inputs.size());
      for (const auto& t : inputs) batch.push_back(gather(t, idx));
      nn::Tensor target({b, c});
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c,
                    target.data.begin() + static_cast<std::ptrdiff_t>(i * c));
      }
      auto fwd = forward_model(model, batch, nn::Mode::Train, derive_seed(seed, "dropout", step));
      auto loss = nn::mse_loss(fwd.probabilities(), target);
      if (cfg.class_weighting) {
        loss.loss = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double d = fwd.probabilities()[i * c + j] - target[i * c + j];
            loss.loss += weights[idx[i]] * d * d / static_cast<double>(b * c);
            loss.grad[i * c + j] *= weights[idx[i]];
          }
        }
      }
      if (!std::isfinite(loss.loss)) {
        fail(ErrorKind::Divergence, kModule,
             "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      loss_sum += loss.loss * static_cast<double>(b);
      auto grads = backward_model(model, fwd, loss.grad);
      for (std::size_t i = 0; i < sets.size(); ++i) {
        nn::sgd_step(*sets[i], grads[i], cfg.learning_rate, cfg.l2);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(n);
    if (validation && validation->rows() > 0) rec.val_accuracy = accuracy(model, *validation);
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.train_accuracy = accuracy(model, train_set);
  return result;
}

CvResult cross_validate(const dataprep::Dataset& train_set, const MfdlcConfig& cfg, int k, std::uint64_t seed) {
  cfg.validate();
  auto folds = dataprep::kfold(train_set.rows(), k, seed);
  for (const auto& f : folds) {
    if (f.size() < sz(cfg.batch_size)) {
      fail(ErrorKind::Config, kModule,
           "fold of " + std::to_string(f.size()) + " rows is smaller than one batch (" +
               std::to_string(cfg.batch_size) + ")");
    }
  }
  CvResult out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    std::vector<std::size_t> fit;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j != i) fit.insert(fit.end(), folds[j].begin(), folds[j].end());
    }
    std::sort(fit.begin(), fit.end());
    auto fit_set = train_set.subset(fit);
    auto val_set = train_set.subset(folds[i]);
    auto model = build_model(cfg, derive_seed(seed, "fold-model", i));
    train(model, fit_set, derive_seed(seed, "fold-train", i));
    out.fold_accuracy.push_back(accuracy(model, val_set));
  }
  const double n = static_cast<double>(out.fold_accuracy.size());
  out.mean = std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out.fold_accuracy) var += (a - out.mean) * (a - out.mean);
  out.stddev = std::sqrt(var / n);
  return out;
}

void save_model(const MfdlcModel& model, const std::filesystem::path& path, std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  const auto pairs = model.config.to_pairs();
  out << "mfdlc-model 1\nconfig " << pairs.size() << '\n';
  for (const auto& [k, v] : pairs) out << k << '=' << v << '\n';
  std::vector<nn::ParameterSet> sets;
  for (const auto* p : model.parameter_sets()) sets.push_back(*p);
  nn::save_parameters(sets, out);
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

MfdlcModel load_model(const std::filesystem::path& path) {
  auto in = open_input(path, kModule);
  std::string line;
  while (in.peek() == '#') std::getline(in, line);
  std::string word;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> word >> version) || word != "mfdlc-model" || version != 1) {
    fail(ErrorKind::Validation, kModule, path.string() + " is not a model checkpoint");
  }
  if (!(in >> word >> count) || word != "config") fail(ErrorKind::Validation, kModule, "missing config block");
  std::getline(in, line);
  std::string text;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(ErrorKind::Validation, kModule, "truncated config block");
    text += line + '\n';
  }
  auto kv = KvConfig::parse(text, path.string());
  auto cfg = config_from(kv);
  kv.require_all_used();
  auto model = build_model(cfg, 0, nn::Init::Zero);
  auto sets = nn::load_parameters(in);
  auto targets = model.parameter_sets();
  if (sets.size() != targets.size()) fail(ErrorKind::Validation, kModule, "checkpoint layer count mismatch");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto& dst = *targets[i];
    if (sets[i].layer != dst.layer || sets[i].items.size() != dst.items.size()) {
      fail(ErrorKind::Validation, kModule, "checkpoint layer '" + sets[i].layer + "' does not match the model");
    }
    for (std::size_t j = 0; j < dst.items.size(); ++j) {
      if (sets[i].items[j].name != dst.items[j].name || !sets[i].items[j].value.same_shape(dst.items[j].value)) {
        fail(ErrorKind::Validation, kModule, "checkpoint parameter mismatch in '" + dst.layer + "'");
      }
    }
    dst.items = std::move(sets[i].items);
  }
  return model;
}

void write_training_log(std::span<const EpochRecord> curve, const std::filesystem::path& path,
                        std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "epoch,mean_loss,val_accuracy\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << format_double(r.mean_loss) << ','
        << (r.val_accuracy ? format_double(*r.val_accuracy) : "undefined") << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

void write_predictions(const MfdlcModel& model, const dataprep::Dataset& ds, std::span<const double> probabilities,
                       const std::filesystem::path& path, std::span<const std::string> preamble) {
  const std::size_t c = model.config.classes.size();
  if (probabilities.size() != ds.rows() * c) fail(ErrorKind::Shape, kModule, "probability matrix size mismatch");
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "provenance,predicted_class";
  for (std::size_t j = 0; j < c; ++j) out << ",prob_" << j;
  out << '\n';
  auto labels = predicted_labels(model, probabilities);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    out << (ds.provenance.empty() ? "" : ds.provenance[i]) << ',' << labels[i];
    for (std::size_t j = 0; j < c; ++j) out << ',' << format_double(probabilities[i * c + j]);
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::mfdlc
