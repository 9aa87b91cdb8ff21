#include "sdnguard/dataprep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "sdnguard/error.hpp"
#include "sdnguard/rng.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::dataprep {
namespace {

constexpr std::string_view kModule = "dataprep";
constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double parse_cell(std::string_view cell) {
  cell = trim_view(cell);
  auto l = lower(cell);
  if (l.empty() || l == "nan" || l == "inf" || l == "+inf" || l == "-inf" || l == "infinity" ||
      l == "+infinity" || l == "-infinity") {
    return kMissing;
  }
  auto v = parse_double(cell);
  if (!v || !std::isfinite(*v)) return kMissing;
  return *v;
}

}  // namespace

std::map<std::string, std::size_t> Dataset::class_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.columns = columns;
  out.values.reserve(indices.size() * cols());
  for (auto i : indices) {
    if (i >= rows()) fail(ErrorKind::Validation, kModule, "row index out of range");
    auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    out.provenance.push_back(provenance.empty() ? std::string() : provenance[i]);
  }
  out.refresh_missing();
  return out;
}

void Dataset::refresh_missing() {
  for (auto& c : columns) c.missing = 0;
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = 0; c < cols(); ++c) {
      if (std::isnan(at(r, c))) ++columns[c].missing;
    }
  }
}

void Dataset::validate() const {
  if (values.size() != rows() * cols()) {
    fail(ErrorKind::Validation, kModule, "dataset is not rectangular");
  }
  if (!provenance.empty() && provenance.size() != rows()) {
    fail(ErrorKind::Validation, kModule, "provenance column length mismatch");
  }
}

Dataset Dataset::from_features(std::span<const flowmeter::FeatureVector> rows) {
  Dataset ds;
  for (auto name : flowmeter::kFeatureNames) ds.columns.push_back({std::string(name), false, 0});
  ds.values.reserve(rows.size() * flowmeter::kFeatureCount);
  for (const auto& fv : rows) {
    ds.values.insert(ds.values.end(), fv.values.begin(), fv.values.end());
    ds.labels.push_back(fv.label);
    ds.provenance.push_back(fv.provenance);
  }
  ds.refresh_missing();
  return ds;
}

Dataset clean(const Dataset& ds, std::span<const Importance> importance, CleanReport* report) {
  ds.validate();
  if (importance.size() != ds.cols()) {
    fail(ErrorKind::Config, kModule, "importance flags must cover every column");
  }
  Dataset in = ds;
  in.refresh_missing();
  std::vector<std::size_t> keep;
  CleanReport local;
  for (std::size_t c = 0; c < in.cols(); ++c) {
    const double rate = in.rows() == 0 ? 0.0
                                       : static_cast<double>(in.columns[c].missing) /
                                             static_cast<double>(in.rows());
    if (rate > kMaxDefectRate) {
      if (importance[c] == Importance::High) {
        fail(ErrorKind::Validation, kModule,
             "column '" + in.columns[c].name + "' is " + format_double(rate * 100) +
                 "% missing but marked important; it cannot be imputed meaningfully");
      }
      local.dropped.push_back(in.columns[c].name);
      continue;
    }
    keep.push_back(c);
  }

  Dataset out;
  out.labels = in.labels;
  out.provenance = in.provenance;
  for (auto c : keep) out.columns.push_back(in.columns[c]);
  out.values.resize(in.rows() * keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto c = keep[j];
    double sum = 0;
    std::size_t present = 0;
    for (std::size_t r = 0; r < in.rows(); ++r) {
      if (!std::isnan(in.at(r, c))) {
        sum += in.at(r, c);
        ++present;
      }
    }
    const double mean = present ? sum / static_cast<double>(present) : 0.0;
    std::size_t imputed = 0;
    for (std::size_t r = 0; r < in.rows(); ++r) {
      double v = in.at(r, c);
      if (std::isnan(v)) {
        v = mean;
        ++imputed;
      }
      out.at(r, j) = v;
    }
    if (imputed) local.imputed.emplace_back(out.columns[j].name, imputed);
  }
  out.refresh_missing();
  if (report) *report = std::move(local);
  return out;
}

Dataset align_columns(const Dataset& ds, std::span<const std::string_view> names, double fill) {
  ds.validate();
  std::vector<std::optional<std::size_t>> source;
  for (auto name : names) {
    std::optional<std::size_t> src;
    for (std::size_t c = 0; c < ds.cols(); ++c) {
      if (ds.columns[c].name == name) src = c;
    }
    source.push_back(src);
  }
  Dataset out;
  out.labels = ds.labels;
  out.provenance = ds.provenance;
  for (auto name : names) out.columns.push_back({std::string(name), false, 0});
  out.values.resize(ds.rows() * names.size());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t j = 0; j < names.size(); ++j) out.at(r, j) = source[j] ? ds.at(r, *source[j]) : fill;
  }
  out.refresh_missing();
  return out;
}

NormalizationStats fit_normalization(const Dataset& train) {
  train.validate();
  NormalizationStats s;
  for (std::size_t c = 0; c < train.cols(); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      const double v = train.at(r, c);
      if (!std::isfinite(v)) {
        fail(ErrorKind::Validation, kModule,
             "non-finite value in column '" + train.columns[c].name + "'; clean the dataset first");
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (train.rows() == 0) lo = hi = 0.0;
    s.names.push_back(train.columns[c].name);
    s.x_min.push_back(lo);
    s.x_max.push_back(hi);
  }
  return s;
}

Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats) {
  ds.validate();
  if (stats.names.size() != ds.cols()) {
    fail(ErrorKind::Validation, kModule, "normalization stats do not match the dataset columns");
  }
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    if (stats.names[c] != ds.columns[c].name) {
      fail(ErrorKind::Validation, kModule,
           "normalization stats column '" + stats.names[c] + "' != '" + ds.columns[c].name + "'");
    }
  }
  Dataset out = ds;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      const double range = stats.x_max[c] - stats.x_min[c];
      double& v = out.at(r, c);
      if (!std::isfinite(v)) {
        fail(ErrorKind::Validation, kModule, "non-finite value in column '" + out.columns[c].name + "'");
      }
      v = range > 0 ? std::clamp((v - stats.x_min[c]) / range, 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

std::pair<Dataset, NormalizationStats> normalize(const Dataset& ds) {
  auto stats = fit_normalization(ds);
  return {apply_normalization(ds, stats), std::move(stats)};
}

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path,
                std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "column,x_min,x_max\n";
  for (std::size_t i = 0; i < stats.names.size(); ++i) {
    out << stats.names[i] << ',' << format_double(stats.x_min[i]) << ','
        << format_double(stats.x_max[i]) << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

NormalizationStats load_stats(const std::filesystem::path& path) {
  auto in = open_input(path, kModule);
  NormalizationStats s;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (trim_view(line) != "column,x_min,x_max") {
        fail(ErrorKind::Validation, kModule, "unexpected stats header in " + path.string());
      }
      header = true;
      continue;
    }
    // Column names may contain commas only in theory; take the last two fields.
    auto f = sdnguard::split(trim_view(line), ',');
    if (f.size() < 3) fail(ErrorKind::Validation, kModule, "malformed stats row: " + line);
    auto lo = parse_double(f[f.size() - 2]);
    auto hi = parse_double(f.back());
    if (!lo || !hi || *lo > *hi) fail(ErrorKind::Validation, kModule, "malformed stats row: " + line);
    std::string name(f[0]);
    for (std::size_t i = 1; i + 2 < f.size(); ++i) name += "," + std::string(f[i]);
    s.names.push_back(name);
    s.x_min.push_back(*lo);
    s.x_max.push_back(*hi);
  }
  if (!header) fail(ErrorKind::Validation, kModule, "missing stats header in " + path.string());
  return s;
}

std::size_t train_count(std::size_t class_size, double train_fraction) {
  // The epsilon keeps exact halves (e.g. 0.7 * 1405 = 983.5) from rounding down
  // through binary representation error.
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(class_size) * train_fraction + 0.5 + 1e-9));
}

SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  ds.validate();
  if (!(train_fraction > 0 && train_fraction < 1)) {
    fail(ErrorKind::Config, kModule, "train fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.labels[i].empty()) fail(ErrorKind::Validation, kModule, "split needs labeled rows");
    by_class[ds.labels[i]].push_back(i);
  }
  SplitResult out;
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      out.warnings.push_back("class '" + label + "' has " + std::to_string(idx.size()) +
                             " sample(s); kept whole in the training set");
      train_idx.insert(train_idx.end(), idx.begin(), idx.end());
      continue;
    }
    Rng rng(derive_seed(seed, "split:" + label));
    shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = std::min(train_count(idx.size(), train_fraction), idx.size());
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  out.train = ds.subset(train_idx);
  out.test = ds.subset(test_idx);
  return out;
}

std::vector<std::vector<std::size_t>> kfold(std::size_t rows, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::Config, kModule, "k-fold needs k >= 2");
  if (static_cast<std::size_t>(k) > rows) {
    fail(ErrorKind::Config, kModule,
         "k = " + std::to_string(k) + " exceeds the row count " + std::to_string(rows));
  }
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  const std::size_t base = rows / static_cast<std::size_t>(k);
  const std::size_t extra = rows % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

std::vector<std::string> class_list(const Dataset& ds, std::span<const std::string> preferred) {
  auto counts = ds.class_counts();
  std::vector<std::string> out;
  for (const auto& p : preferred) {
    if (counts.contains(p)) {
      out.push_back(p);
      counts.erase(p);
    }
  }
  for (const auto& [name, n] : counts) out.push_back(name);
  return out;
}

std::vector<int> class_indices(std::span<const std::string> labels, std::span<const std::string> classes) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = index.find(l);
    if (it == index.end()) fail(ErrorKind::Validation, kModule, "unknown class label '" + l + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> one_hot(std::span<const std::string> labels, std::span<const std::string> classes) {
  auto idx = class_indices(labels, classes);
  std::vector<double> out(labels.size() * classes.size(), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out[i * classes.size() + static_cast<std::size_t>(idx[i])] = 1.0;
  }
  return out;
}

Dataset encode_categorical(const Dataset& ds) {
  ds.validate();
  Dataset out;
  out.labels = ds.labels;
  out.provenance = ds.provenance;
  struct Source {
    std::size_t column;
    std::optional<double> level;  // nullopt: numeric passthrough
  };
  std::vector<Source> sources;
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    if (!ds.columns[c].categorical) {
      out.columns.push_back(ds.columns[c]);
      sources.push_back({c, std::nullopt});
      continue;
    }
    std::set<double> levels;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (!std::isnan(ds.at(r, c))) levels.insert(ds.at(r, c));
    }
    for (double level : levels) {
      out.columns.push_back({ds.columns[c].name + "=" + format_double(level), false, 0});
      sources.push_back({c, level});
    }
  }
  out.values.resize(ds.rows() * out.columns.size());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const double v = ds.at(r, sources[j].column);
      out.at(r, j) = sources[j].level ? (v == *sources[j].level ? 1.0 : 0.0) : v;
    }
  }
  out.refresh_missing();
  return out;
}

std::map<std::string, double> class_weights(const Dataset& ds) {
  auto counts = ds.class_counts();
  std::map<std::string, double> w;
  if (counts.empty()) return w;
  double total = 0;
  for (const auto& [name, n] : counts) {
    w[name] = 1.0 / static_cast<double>(n);
    total += w[name];
  }
  const double mean = total / static_cast<double>(counts.size());
  for (auto& [name, v] : w) v /= mean;
  return w;
}

std::string canonical_class(std::string_view label) {
  const auto l = lower(trim_view(label));
  static const std::map<std::string, std::string> table = {
      {"normal", "Normal"}, {"benign", "Normal"},   {"ddos", "DDoS"},   {"dos", "DoS"},
      {"probe", "Probe"},   {"bfa", "BFA"},         {"web", "Web"},     {"web-attack", "Web"},
      {"webattack", "Web"}, {"web attack", "Web"},  {"botnet", "BotNet"}, {"bot", "BotNet"},
      {"u2r", "U2R"},
  };
  auto it = table.find(l);
  return it == table.end() ? std::string(trim_view(label)) : it->second;
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options, LoadReport* report) {
  auto in = open_input(path, kModule);
  LoadReport local;
  std::string line;
  std::vector<std::optional<std::size_t>> column_map;
  std::optional<std::size_t> label_col, provenance_col;
  bool header = false;
  std::set<std::string> excluded;
  for (const auto& e : options.exclude_labels) excluded.insert(canonical_class(e));

  Dataset ds;
  for (auto name : flowmeter::kFeatureNames) ds.columns.push_back({std::string(name), false, 0});
  std::vector<bool> seen(flowmeter::kFeatureCount, false);
  std::size_t width = 0;

  while (std::getline(in, line)) {
    if (!header) {
      if (line.empty() || line.front() == '#') continue;
      auto names = sdnguard::split(line, ',');
      width = names.size();
      for (std::size_t i = 0; i < names.size(); ++i) {
        const auto name = trim_view(names[i]);
        const auto l = lower(name);
        if (l == "label") {
          label_col = i;
          column_map.emplace_back();
          continue;
        }
        if (l == "provenance") {
          provenance_col = i;
          column_map.emplace_back();
          continue;
        }
        auto idx = flowmeter::feature_index(name);
        if (idx && !seen[*idx]) {
          seen[*idx] = true;
          column_map.push_back(idx);
        } else {
          column_map.emplace_back();
          local.ignored_columns.emplace_back(name);
        }
      }
      header = true;
      continue;
    }
    if (trim_view(line).empty()) continue;
    auto cells = sdnguard::split(line, ',');
    if (cells.size() != width) {
      fail(ErrorKind::Validation, kModule,
           path.string() + ": row " + std::to_string(local.rows_read + 1) + " has " +
               std::to_string(cells.size()) + " fields, header has " + std::to_string(width));
    }
    ++local.rows_read;
    std::string label = label_col ? canonical_class(cells[*label_col]) : std::string();
    if (excluded.contains(label)) {
      ++local.rows_excluded;
      continue;
    }
    std::vector<double> row(flowmeter::kFeatureCount, kMissing);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (column_map[i]) row[*column_map[i]] = parse_cell(cells[i]);
    }
    ds.values.insert(ds.values.end(), row.begin(), row.end());
    ds.labels.push_back(std::move(label));
    ds.provenance.emplace_back(provenance_col ? trim_view(cells[*provenance_col]) : std::string_view());
  }
  if (!header) fail(ErrorKind::Validation, kModule, path.string() + ": missing header row");
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) local.absent_features.emplace_back(flowmeter::kFeatureNames[i]);
  }
  ds.refresh_missing();
  if (report) *report = std::move(local);
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, std::span<const std::string> preamble) {
  ds.validate();
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  for (const auto& c : ds.columns) out << c.name << ',';
  out << "label,provenance\n";
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.cols(); ++c) {
      const double v = ds.at(r, c);
      out << (std::isnan(v) ? std::string() : format_double(v)) << ',';
    }
    out << ds.labels[r] << ',' << (ds.provenance.empty() ? std::string() : ds.provenance[r]) << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::dataprep
