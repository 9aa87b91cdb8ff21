#pragma once

// Tabular dataset handling: ingestion, cleaning, Min-Max normalization,
// stratified train/test split, k-fold partitioning and label encoding.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdnguard/flowmeter.hpp"

namespace sdnguard::dataprep {

struct Column {
  std::string name;
  bool categorical = false;
  std::size_t missing = 0;
};

/// Row-major table of doubles; NaN marks a missing value.
struct Dataset {
  std::vector<Column> columns;
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<std::string> provenance;

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return columns.size(); }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  std::map<std::string, std::size_t> class_counts() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Recomputes Column::missing.
  void refresh_missing();
  /// Throws a validation error unless the table is rectangular.
  void validate() const;

  static Dataset from_features(std::span<const flowmeter::FeatureVector> rows);
};

enum class Importance { Low, High };

struct CleanReport {
  std::vector<std::string> dropped;
  std::vector<std::pair<std::string, std::size_t>> imputed;  // column, imputed cells
};

inline constexpr double kMaxDefectRate = 0.8;

/// Drops columns with defect rate > 0.8 and low importance, then replaces
/// remaining missing cells with the column mean over present cells. A
/// column that is both that defective and important is a validation error.
Dataset clean(const Dataset& ds, std::span<const Importance> importance, CleanReport* report = nullptr);

/// Reorders columns to `names`; names missing from `ds` become constant
/// `fill` columns, so a fixed-size model input keeps its layout.
Dataset align_columns(const Dataset& ds, std::span<const std::string_view> names, double fill = 0.0);

struct NormalizationStats {
  std::vector<std::string> names;
  std::vector<double> x_min;
  std::vector<double> x_max;
};

NormalizationStats fit_normalization(const Dataset& train);
/// x' = (x - x_min) / (x_max - x_min), clipped to [0, 1]; constant columns map to 0.
Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats);
/// Fits on `ds` and applies to it.
std::pair<Dataset, NormalizationStats> normalize(const Dataset& ds);

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path,
                std::span<const std::string> preamble = {});
NormalizationStats load_stats(const std::filesystem::path& path);

/// Per-class training count: n * fraction rounded half up.
std::size_t train_count(std::size_t class_size, double train_fraction);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Row indices of k disjoint folds covering [0, rows); sizes differ by <= 1.
std::vector<std::vector<std::size_t>> kfold(std::size_t rows, int k, std::uint64_t seed);

/// Sorted class names, with `preferred` names (if present) first in order.
std::vector<std::string> class_list(const Dataset& ds, std::span<const std::string> preferred = {});
/// One-hot rows (N x classes.size()); unknown labels are a validation error.
std::vector<double> one_hot(std::span<const std::string> labels, std::span<const std::string> classes);
std::vector<int> class_indices(std::span<const std::string> labels, std::span<const std::string> classes);
/// Replaces every categorical column by one indicator column per value.
Dataset encode_categorical(const Dataset& ds);
/// Inverse-frequency class weights normalized to mean 1 (optional knob).
std::map<std::string, double> class_weights(const Dataset& ds);

/// Canonical class spelling (e.g. "Web-Attack" -> "Web", "BOTNET" -> "BotNet").
std::string canonical_class(std::string_view label);

struct LoadOptions {
  std::vector<std::string> exclude_labels{"U2R"};
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_excluded = 0;
  std::vector<std::string> ignored_columns;
  std::vector<std::string> absent_features;
};

/// Reads a feature CSV (this tool's or InSDN/CIC style). The 48 features
/// are matched by name; other columns are ignored. Empty, NaN and Infinity
/// cells become missing.
Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options = {},
                 LoadReport* report = nullptr);
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              std::span<const std::string> preamble = {});

}  // namespace sdnguard::dataprep
