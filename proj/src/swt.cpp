#include "sdnguard/swt.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sdnguard/error.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::swt {
namespace {

constexpr std::string_view kModule = "swt";

constexpr double kDb4[] = {-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
                           -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
                           0.7148465705525415,    0.23037781330885523};
constexpr double kDb2[] = {-0.12940952255126037, 0.22414386804201339, 0.8365163037378079,
                           0.48296291314453416};

// y[t] = sum_j f[j] * x[(t - step*j) mod k]
std::vector<double> circular_filter(const std::vector<double>& x, const std::vector<double>& f,
                                    std::size_t step) {
  const std::size_t k = x.size();
  std::vector<double> y(k, 0.0);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const std::size_t shift = (step * j) % k;
    for (std::size_t t = 0; t < k; ++t) y[t] += f[j] * x[(t + k - shift) % k];
  }
  return y;
}

}  // namespace

WaveletFilters filter_bank(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  WaveletFilters wf;
  wf.name = upper;
  if (upper == "DB4") {
    wf.lowpass.assign(std::begin(kDb4), std::end(kDb4));
  } else if (upper == "DB2") {
    wf.lowpass.assign(std::begin(kDb2), std::end(kDb2));
  } else {
    fail(ErrorKind::Config, kModule, "unknown wavelet '" + std::string(name) + "' (known: DB4, DB2)");
  }
  const std::size_t n = wf.lowpass.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double sign = k % 2 == 0 ? -1.0 : 1.0;
    wf.highpass.push_back(sign * wf.lowpass[n - 1 - k]);
  }
  return wf;
}

BranchSet decompose(std::span<const double> x, int level, const WaveletFilters& filters) {
  if (x.empty()) fail(ErrorKind::Validation, kModule, "cannot decompose an empty sequence");
  if (level < 0 || level > kMaxLevel) {
    fail(ErrorKind::Config, kModule, "decomposition level must lie in [0, " + std::to_string(kMaxLevel) + "]");
  }
  if (filters.lowpass.empty() || filters.lowpass.size() != filters.highpass.size()) {
    fail(ErrorKind::Config, kModule, "malformed filter bank");
  }
  for (double v : x) {
    if (!std::isfinite(v)) fail(ErrorKind::Validation, kModule, "non-finite input value");
  }
  BranchSet out;
  out.level = level;
  std::vector<double> approx(x.begin(), x.end());
  for (int i = 1; i <= level; ++i) {
    const std::size_t step = std::size_t{1} << (i - 1);
    out.branches.push_back(circular_filter(approx, filters.highpass, step));
    approx = circular_filter(approx, filters.lowpass, step);
  }
  out.branches.push_back(std::move(approx));
  return out;
}

void write_branch_csv(const BranchSet& set, const std::filesystem::path& path) {
  auto out = open_output(path, kModule);
  for (std::size_t b = 0; b < set.branches.size(); ++b) {
    out << (b + 1 < set.branches.size() ? "detail" + std::to_string(b + 1)
                                         : "approx" + std::to_string(set.level));
    for (double v : set.branches[b]) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::swt
