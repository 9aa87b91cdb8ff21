#pragma once

// Undecimated (a-trous) multilevel wavelet decomposition with periodic
// extension. A length-k input at level n yields n+1 length-k branches.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdnguard::swt {

struct WaveletFilters {
  std::string name;
  std::vector<double> lowpass;   // h, orthonormal: sum = sqrt(2)
  std::vector<double> highpass;  // g[k] = (-1)^(k+1) h[L-1-k]
};

/// "DB4" (8 taps) or "DB2" (4 taps), case-insensitive.
WaveletFilters filter_bank(std::string_view name);

struct BranchSet {
  int level = 0;
  /// [detail level 1, ..., detail level n, approximation level n]
  std::vector<std::vector<double>> branches;

  std::size_t count() const { return branches.size(); }
  std::size_t length() const { return branches.empty() ? 0 : branches.front().size(); }
};

inline constexpr int kMaxLevel = 16;

BranchSet decompose(std::span<const double> x, int level, const WaveletFilters& filters);

/// Debug dump: one row per branch, `branch,v0,...,v{k-1}`.
void write_branch_csv(const BranchSet& set, const std::filesystem::path& path);

}  // namespace sdnguard::swt
