#pragma once

// Confusion matrices, multiclass and binary (normal vs abnormal) metrics,
// and plot-ready report files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sdnguard::evalkit {

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;  // [true][predicted]

  std::uint64_t total() const;
  std::size_t index_of(std::string_view name) const;  // validation error if unknown
  /// Same counts under a different class order.
  ConfusionMatrix reordered(std::span<const std::string> order) const;
};

/// Unknown tokens or unequal lengths are validation errors.
ConfusionMatrix confusion(std::span<const std::string> labels, std::span<const std::string> predictions,
                          std::span<const std::string> class_order);
ConfusionMatrix from_counts(std::vector<std::string> classes, std::vector<std::vector<std::uint64_t>> counts);

/// Undefined ratios (0/0) are empty optionals.
using Metric = std::optional<double>;

/// Lenient: an attack predicted as any attack class is a true positive.
/// Strict: only the exact attack class counts; other attack classes are
/// false negatives.
enum class Collapse { Lenient, Strict };

struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct BinaryMetrics {
  BinaryCounts counts;
  Metric accuracy, precision, recall, f1, fpr;
};

BinaryCounts collapse(const ConfusionMatrix& cm, std::string_view normal_class, Collapse mode = Collapse::Lenient);
BinaryMetrics binary_metrics(const ConfusionMatrix& cm, std::string_view normal_class,
                             Collapse mode = Collapse::Lenient);
BinaryMetrics binary_metrics(const BinaryCounts& counts);

Metric multiclass_accuracy(const ConfusionMatrix& cm);
std::vector<Metric> per_class_recall(const ConfusionMatrix& cm);

inline constexpr std::string_view kUndefined = "undefined";
std::string format_metric(const Metric& m);

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path,
                         std::span<const std::string> preamble = {});

struct MetricsRow {
  std::string model;
  std::string dataset;
  BinaryMetrics metrics;
};

/// `model,dataset,acc,prec,rec,f1,fpr`
void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path,
                       std::span<const std::string> preamble = {});

}  // namespace sdnguard::evalkit
