#include <doctest.h>

#include <cmath>
#include <numeric>

#include "checks.hpp"
#include "sdnguard/swt.hpp"
#include "test_helpers.hpp"

using namespace sdnguard;

TEST_CASE("filter banks are orthonormal quadrature mirrors") {
  for (const char* name : {"DB4", "db2"}) {
    const auto f = swt::filter_bank(name);
    const std::size_t l = f.lowpass.size();
    CHECK(l == (std::string(name) == "DB4" ? 8u : 4u));
    CHECK(std::accumulate(f.lowpass.begin(), f.lowpass.end(), 0.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::accumulate(f.highpass.begin(), f.highpass.end(), 0.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    for (std::size_t k = 0; k < l; ++k) {
      const double sign = (k % 2 == 0) ? -1.0 : 1.0;
      CHECK(f.highpass[k] == sign * f.lowpass[l - 1 - k]);
    }
    // Orthonormal under even shifts.
    for (std::size_t s = 0; s < l; s += 2) {
      double dot = 0;
      for (std::size_t k = 0; k + s < l; ++k) dot += f.lowpass[k] * f.lowpass[k + s];
      CHECK(dot == doctest::Approx(s == 0 ? 1.0 : 0.0).scale(1.0).epsilon(1e-10));
    }
  }
  CHECK(testutil::error_kind([] { (void)swt::filter_bank("DB99"); }) == ErrorKind::Config);
}

TEST_CASE("branch count and length") {
  const auto f = swt::filter_bank("DB4");
  std::vector<double> x(48, 1.0);
  for (int n = 0; n <= 4; ++n) {
    const auto set = swt::decompose(x, n, f);
    CHECK(set.count() == static_cast<std::size_t>(n + 1));
    CHECK(set.length() == 48);
  }
  CHECK(swt::decompose(x, 0, f).branches[0] == x);
}

TEST_CASE("decomposition agrees with brute-force dilated convolution and its invariants") {
  const auto r = checks::swt_report(derive_seed(41, "swt"), 100);
  CHECK(r.oracle_error < 1e-9);
  CHECK(r.constant_detail < 1e-10);
  CHECK(r.constant_approx < 1e-10);
  CHECK(r.shift_error < 1e-9);
  CHECK(r.linearity_error < 1e-9);
}

TEST_CASE("short inputs wrap periodically") {
  // Filters longer than the signal still match the brute-force oracle.
  const auto f = swt::filter_bank("DB4");
  const std::vector<double> x = {1, -2, 0.5};
  const auto got = swt::decompose(x, 3, f);
  const auto want = oracle::atrous(x, 3, f.lowpass, f.highpass);
  for (std::size_t b = 0; b < want.size(); ++b) CHECK(checks::max_abs_diff(got.branches[b], want[b]) < 1e-12);
}

TEST_CASE("decomposition errors") {
  const auto f = swt::filter_bank("DB4");
  CHECK(testutil::error_kind([&] { (void)swt::decompose(std::vector<double>{}, 2, f); }) == ErrorKind::Validation);
  CHECK(testutil::error_kind([&] { (void)swt::decompose(std::vector<double>(4, 1.0), -1, f); }) == ErrorKind::Config);
  CHECK(testutil::error_kind([&] { (void)swt::decompose(std::vector<double>(4, 1.0), 99, f); }) == ErrorKind::Config);
  CHECK(testutil::error_kind([&] { (void)swt::decompose(std::vector<double>{1.0, NAN}, 1, f); }) ==
        ErrorKind::Validation);
}

TEST_CASE("branch CSV dump") {
  const auto dir = testutil::scratch_dir("swt");
  swt::BranchSet set{1, {{1, 2}, {3, 4}}};
  swt::write_branch_csv(set, dir / "b.csv");
  const auto text = testutil::read_file(dir / "b.csv");
  CHECK(text.find("1,2") != std::string::npos);
  CHECK(text.find("3,4") != std::string::npos);
}
