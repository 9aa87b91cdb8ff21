#pragma once

// Seven-class reference confusion matrix (rows: true class, columns:
// predicted class) and a pair-list expansion for counting oracles.

#include <cstdint>
#include <string>
#include <vector>

namespace reference {

inline const std::vector<std::string> kClasses = {"Normal", "DDoS", "DoS", "Probe", "BFA", "Web", "BotNet"};

inline const std::vector<std::vector<std::uint64_t>> kCounts = {
    {20473, 12, 23, 16, 3, 0, 0},   {15, 36552, 7, 6, 2, 0, 1}, {21, 5, 16046, 13, 0, 0, 0},
    {16, 10, 8, 29402, 2, 0, 1},    {2, 2, 1, 0, 415, 1, 1},    {0, 1, 0, 1, 0, 56, 0},
    {0, 1, 0, 1, 0, 1, 46}};

struct Pairs {
  std::vector<std::string> labels, predictions;
};

inline Pairs expand() {
  Pairs p;
  for (std::size_t t = 0; t < kClasses.size(); ++t) {
    for (std::size_t q = 0; q < kClasses.size(); ++q) {
      for (std::uint64_t i = 0; i < kCounts[t][q]; ++i) {
        p.labels.push_back(kClasses[t]);
        p.predictions.push_back(kClasses[q]);
      }
    }
  }
  return p;
}

/// Binary tallies from a pair list by direct scan.
struct Tally {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Tally scan(const Pairs& p, const std::string& normal, bool strict) {
  Tally t;
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    const bool truth_attack = p.labels[i] != normal;
    const bool pred_attack = p.predictions[i] != normal;
    if (!truth_attack) {
      pred_attack ? ++t.fp : ++t.tn;
    } else if (pred_attack && (!strict || p.predictions[i] == p.labels[i])) {
      ++t.tp;
    } else {
      ++t.fn;
    }
  }
  return t;
}

}  // namespace reference
