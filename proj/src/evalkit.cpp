#include "sdnguard/evalkit.hpp"

#include <algorithm>

#include "sdnguard/error.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::evalkit {
namespace {

constexpr std::string_view kModule = "evalkit";

Metric ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::size_t ConfusionMatrix::index_of(std::string_view name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) fail(ErrorKind::Validation, kModule, "unknown class '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

ConfusionMatrix ConfusionMatrix::reordered(std::span<const std::string> order) const {
  if (order.size() != classes.size()) fail(ErrorKind::Validation, kModule, "class order size mismatch");
  std::vector<std::size_t> map;
  for (const auto& c : order) map.push_back(index_of(c));
  ConfusionMatrix out;
  out.classes.assign(order.begin(), order.end());
  out.counts.assign(order.size(), std::vector<std::uint64_t>(order.size(), 0));
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < order.size(); ++j) out.counts[i][j] = counts[map[i]][map[j]];
  return out;
}

ConfusionMatrix from_counts(std::vector<std::string> classes, std::vector<std::vector<std::uint64_t>> counts) {
  if (counts.size() != classes.size()) fail(ErrorKind::Validation, kModule, "confusion matrix is not square");
  for (const auto& row : counts) {
    if (row.size() != classes.size()) fail(ErrorKind::Validation, kModule, "confusion matrix is not square");
  }
  return {std::move(classes), std::move(counts)};
}

ConfusionMatrix confusion(std::span<const std::string> labels, std::span<const std::string> predictions,
                          std::span<const std::string> class_order) {
  if (labels.size() != predictions.size()) {
    fail(ErrorKind::Validation, kModule, "label and prediction lists differ in length");
  }
  ConfusionMatrix cm;
  cm.classes.assign(class_order.begin(), class_order.end());
  cm.counts.assign(cm.classes.size(), std::vector<std::uint64_t>(cm.classes.size(), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) ++cm.counts[cm.index_of(labels[i])][cm.index_of(predictions[i])];
  return cm;
}

BinaryCounts collapse(const ConfusionMatrix& cm, std::string_view normal_class, Collapse mode) {
  const std::size_t normal = cm.index_of(normal_class);
  BinaryCounts b;
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    for (std::size_t j = 0; j < cm.classes.size(); ++j) {
      const auto v = cm.counts[i][j];
      if (i == normal) {
        (j == normal ? b.tn : b.fp) += v;
      } else if (j == normal) {
        b.fn += v;
      } else if (mode == Collapse::Lenient || i == j) {
        b.tp += v;
      } else {
        b.fn += v;
      }
    }
  }
  return b;
}

BinaryMetrics binary_metrics(const BinaryCounts& c) {
  BinaryMetrics m;
  m.counts = c;
  m.accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0) {
    m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

BinaryMetrics binary_metrics(const ConfusionMatrix& cm, std::string_view normal_class, Collapse mode) {
  return binary_metrics(collapse(cm, normal_class, mode));
}

Metric multiclass_accuracy(const ConfusionMatrix& cm) {
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.classes.size(); ++i) diag += cm.counts[i][i];
  return ratio(diag, cm.total());
}

std::vector<Metric> per_class_recall(const ConfusionMatrix& cm) {
  std::vector<Metric> out;
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    std::uint64_t row = 0;
    for (auto v : cm.counts[i]) row += v;
    out.push_back(ratio(cm.counts[i][i], row));
  }
  return out;
}

std::string format_metric(const Metric& m) { return m ? format_double(*m) : std::string(kUndefined); }

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path,
                         std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "true\\predicted";
  for (const auto& c : cm.classes) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    out << cm.classes[i];
    for (auto v : cm.counts[i]) out << ',' << v;
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path,
                       std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "model,dataset,acc,prec,rec,f1,fpr\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.model << ',' << r.dataset << ',' << format_metric(m.accuracy) << ',' << format_metric(m.precision)
        << ',' << format_metric(m.recall) << ',' << format_metric(m.f1) << ',' << format_metric(m.fpr) << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::evalkit
