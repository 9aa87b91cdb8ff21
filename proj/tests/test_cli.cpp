#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "test_helpers.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SDNGUARD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string first_lines(const std::string& text, int n) {
  std::size_t pos = 0;
  for (int i = 0; i < n && pos != std::string::npos; ++i) {
    pos = text.find('\n', pos);
    if (pos != std::string::npos) ++pos;
  }
  return text.substr(0, pos);
}

}  // namespace

TEST_CASE("simulate writes preamble-tagged artifacts deterministically") {
  const auto dir = testutil::scratch_dir("cli-sim");
  const std::string common = " --seed 5 --set simulate.duration_s=12";
  REQUIRE(run("simulate --out " + (dir / "a").string() + common) == 0);
  REQUIRE(run("simulate --out " + (dir / "b").string() + common) == 0);
  const auto a = testutil::read_file(dir / "a" / "packets.csv");
  CHECK(a == testutil::read_file(dir / "b" / "packets.csv"));
  const auto head = first_lines(a, 2);
  CHECK(head.rfind("# config_hash=", 0) == 0);
  CHECK(head.find(" seed=5\n# subcommand=simulate\n") != std::string::npos);
  CHECK(testutil::read_file(dir / "a" / "switch_counters.csv").rfind("# config_hash=", 0) == 0);
  const auto summary = testutil::read_file(dir / "a" / "simulate_summary.json");
  const auto hash_pos = summary.find("\"config_hash\"");
  const auto seed_pos = summary.find("\"seed\"");
  const auto sub_pos = summary.find("\"subcommand\"");
  CHECK(hash_pos < seed_pos);
  CHECK(seed_pos < sub_pos);
  CHECK(sub_pos < summary.find("\"packets\""));
  CHECK(run("simulate --out " + (dir / "c").string() + " --seed 6 --set simulate.duration_s=12") == 0);
  CHECK(testutil::read_file(dir / "c" / "packets.csv") != a);
}

TEST_CASE("simulate then extract yields labelled features") {
  const auto dir = testutil::scratch_dir("cli-extract");
  REQUIRE(run("simulate --out " + dir.string() + " --seed 3 --set simulate.duration_s=15") == 0);
  REQUIRE(run("extract --out " + (dir / "x").string() + " --set extract.input=" + (dir / "packets.csv").string() +
              " --set extract.label_attacker=12.0.0.11") == 0);
  const auto text = testutil::read_file(dir / "x" / "features.csv");
  CHECK(text.find("# subcommand=extract\n") != std::string::npos);
  CHECK(text.find(",Attack,s1-p1\n") != std::string::npos);
  CHECK(text.find(",Normal,") != std::string::npos);
}

TEST_CASE("coarse summary is reproducible") {
  const auto dir = testutil::scratch_dir("cli-coarse");
  const std::string common = " --seed 7 --set calibrate.duration_s=120 --set coarse.duration_s=40";
  REQUIRE(run("coarse --out " + (dir / "a").string() + common) == 0);
  REQUIRE(run("coarse --out " + (dir / "b").string() + common) == 0);
  CHECK(testutil::read_file(dir / "a" / "coarse_summary.json") ==
        testutil::read_file(dir / "b" / "coarse_summary.json"));
  CHECK(testutil::read_file(dir / "a" / "windows.csv") == testutil::read_file(dir / "b" / "windows.csv"));
}

TEST_CASE("errors map to exit codes and leave no artifacts") {
  const auto dir = testutil::scratch_dir("cli-errors");
  const auto out = dir / "out";
  CHECK(run("extract --out " + out.string() + " --set extract.input=" + (dir / "missing.csv").string()) == 1);
  CHECK_FALSE(fs::exists(out));
  CHECK(run("simulate --out " + out.string()) == 1);  // no seed
  CHECK_FALSE(fs::exists(out));
  CHECK(run("simulate --out " + out.string() + " --seed 1 --set bogus.key=1") == 1);
  CHECK_FALSE(fs::exists(out));
  testutil::write_file(dir / "bad.conf", "this line has no equals sign\n");
  CHECK(run("simulate --out " + out.string() + " --seed 1 --config " + (dir / "bad.conf").string()) == 1);
  CHECK(run("") == 1);
  CHECK(run("no-such-command") == 1);
  testutil::write_file(dir / "packets.csv", "not,a,packet,header\n");
  CHECK(run("extract --out " + out.string() + " --set extract.input=" + (dir / "packets.csv").string()) == 2);
}

TEST_CASE("the shipped scenario config is accepted by every subcommand's key check") {
  const auto dir = testutil::scratch_dir("cli-config");
  const fs::path conf = fs::path(SDNGUARD_SOURCE_DIR) / "configs" / "scenario.conf";
  REQUIRE(fs::exists(conf));
  CHECK(run("simulate --config " + conf.string() + " --out " + dir.string() +
            " --seed 2 --set simulate.duration_s=3") == 0);
}
