#pragma once

// Multi-frequency classifier: the feature vector is split into wavelet
// branches, each branch runs its own CNN + LSTM stack, the branch outputs
// are averaged and a shared dense projection feeds SoftMax.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdnguard/dataprep.hpp"
#include "sdnguard/kvconfig.hpp"
#include "sdnguard/neuralkit.hpp"
#include "sdnguard/swt.hpp"

namespace sdnguard::mfdlc {

inline const std::vector<std::string> kDefaultClasses = {"Normal", "DDoS", "DoS", "Probe",
                                                         "BFA",    "Web",  "BotNet"};

struct MfdlcConfig {
  int level = 3;
  std::string wavelet = "DB4";
  int image_height = 8;
  int image_width = 6;
  int conv1_channels = 32;
  int conv2_channels = 64;
  int kernel = 3;
  int pool = 2;
  double dropout1 = 0.2;
  double dropout2 = 0.3;
  int lstm_units = 128;
  std::vector<std::string> classes = kDefaultClasses;
  double learning_rate = 0.01;
  double l2 = 0.01;
  int batch_size = 16;
  int epochs = 100;
  /// Inverse-frequency sample weighting (off by default).
  bool class_weighting = false;

  static constexpr int kMaxLevel = 4;

  std::size_t feature_count() const { return static_cast<std::size_t>(image_height * image_width); }
  /// Configuration error on an invalid combination.
  void validate() const;
  /// Sorted key=value lines (used as checkpoint header and for hashing).
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

/// Reads the `mfdlc.*` keys.
MfdlcConfig config_from(const KvConfig& cfg, MfdlcConfig base = {});

struct Branch {
  nn::LayerSpec conv1, pool1, drop1, conv2, pool2, drop2, lstm;
  nn::ParameterSet conv1_params, conv2_params, lstm_params;
};

struct MfdlcModel {
  MfdlcConfig config;
  swt::WaveletFilters filters;
  std::vector<Branch> branches;
  nn::LayerSpec projection;
  nn::LayerSpec softmax;
  nn::ParameterSet projection_params;

  std::size_t branch_count() const { return branches.size(); }
  /// All parameter sets in a stable order (branch by branch, projection last).
  std::vector<nn::ParameterSet*> parameter_sets();
  std::vector<const nn::ParameterSet*> parameter_sets() const;
};

MfdlcModel build_model(const MfdlcConfig& cfg, std::uint64_t seed, nn::Init init = nn::Init::Default);

/// Wavelet front-end: one (N,1,H,W) tensor per branch for the given rows.
std::vector<nn::Tensor> prepare_inputs(const MfdlcModel& model, std::span<const double> rows, std::size_t n);

/// z for one branch and one subsequence (length H*W).
std::vector<double> branch_forward(const MfdlcModel& model, std::size_t branch,
                                   std::span<const double> subsequence, nn::Mode mode = nn::Mode::Eval,
                                   std::uint64_t seed = 0);

struct BranchTrace {
  std::vector<nn::ForwardResult> steps;  // conv1, pool1, drop1, conv2, pool2, drop2, lstm
};

struct ModelForward {
  std::vector<BranchTrace> branches;
  nn::Tensor mean_z;  // (N, units)
  nn::ForwardResult projection;
  nn::ForwardResult softmax;
  const nn::Tensor& probabilities() const { return softmax.output; }
};

ModelForward forward_model(const MfdlcModel& model, const std::vector<nn::Tensor>& inputs, nn::Mode mode,
                           std::uint64_t seed = 0);

/// Gradients aligned with MfdlcModel::parameter_sets().
std::vector<nn::Gradients> backward_model(const MfdlcModel& model, const ModelForward& fwd,
                                          const nn::Tensor& grad_probabilities);

/// Class probabilities for one normalized feature vector.
std::vector<double> predict(const MfdlcModel& model, std::span<const double> features);
/// Row-major (rows x classes) probabilities for a normalized dataset.
std::vector<double> predict_batch(const MfdlcModel& model, const dataprep::Dataset& ds,
                                  std::size_t chunk = 256);
std::vector<std::string> predicted_labels(const MfdlcModel& model, std::span<const double> probabilities);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  double train_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD on MSE(SoftMax, one-hot) with L2 decay. Shuffling and
/// dropout masks are derived from `seed`. A non-finite loss is a divergence
/// error naming the epoch and batch.
TrainResult train(MfdlcModel& model, const dataprep::Dataset& train_set, std::uint64_t seed,
                  const dataprep::Dataset* validation = nullptr, const EpochCallback& on_epoch = {});

double accuracy(const MfdlcModel& model, const dataprep::Dataset& ds);

struct CvResult {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;
};

CvResult cross_validate(const dataprep::Dataset& train_set, const MfdlcConfig& cfg, int k, std::uint64_t seed);

void save_model(const MfdlcModel& model, const std::filesystem::path& path,
                std::span<const std::string> preamble = {});
MfdlcModel load_model(const std::filesystem::path& path);

void write_training_log(std::span<const EpochRecord> curve, const std::filesystem::path& path,
                        std::span<const std::string> preamble = {});
void write_predictions(const MfdlcModel& model, const dataprep::Dataset& ds, std::span<const double> probabilities,
                       const std::filesystem::path& path, std::span<const std::string> preamble = {});

}  // namespace sdnguard::mfdlc
