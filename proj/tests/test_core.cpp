#include <doctest.h>

#include <cmath>

#include "sdnguard/error.hpp"
#include "sdnguard/kvconfig.hpp"
#include "sdnguard/packet.hpp"
#include "sdnguard/rng.hpp"
#include "sdnguard/textio.hpp"
#include "test_helpers.hpp"

using namespace sdnguard;

TEST_CASE("error carries kind and module") {
  try {
    fail(ErrorKind::Shape, "neuralkit", "bad");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
    CHECK(e.module() == "neuralkit");
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("rng ranges") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = r.uniform_int(2, 5);
    CHECK(k >= 2);
    CHECK(k <= 5);
  }
}

TEST_CASE("kvconfig parsing, overrides and unused keys") {
  auto cfg = KvConfig::parse("# comment\na = 1\nb.c = hello world\n\nflag = true\n");
  cfg.set("a=2");
  CHECK(cfg.get_int("a", 0) == 2);
  CHECK(cfg.get_string("b.c", "") == "hello world");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double("missing", 1.5) == 1.5);
  CHECK(cfg.unused_keys().empty());
  cfg.set("typo", "1");
  CHECK(cfg.unused_keys() == std::set<std::string>{"typo"});
  CHECK(testutil::error_kind([&] { cfg.require_all_used(); }) == ErrorKind::Config);
  CHECK(testutil::error_kind([] { (void)KvConfig::parse("novalue\n"); }) == ErrorKind::Config);
  auto bad = KvConfig::parse("x = abc\n");
  CHECK(testutil::error_kind([&] { (void)bad.get_int("x", 0); }) == ErrorKind::Config);
}

TEST_CASE("kvconfig hash depends on content only") {
  auto a = KvConfig::parse("x=1\ny=2\n");
  auto b = KvConfig::parse("y = 2\nx = 1\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.set("x=3");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("ipv4 formatting round-trips") {
  const Ipv4 ip = make_ipv4(12, 0, 0, 11);
  CHECK(format_ipv4(ip) == "12.0.0.11");
  CHECK(parse_ipv4("12.0.0.11") == ip);
  CHECK_FALSE(parse_ipv4("300.1.1.1"));
  CHECK_FALSE(parse_ipv4("1.2.3"));
}

TEST_CASE("packet rows parse and reject malformed input") {
  PacketRecord r{1500, 2, 3, make_ipv4(10, 0, 0, 1), make_ipv4(10, 0, 0, 2), 1234, 80, kTcp, 60, tcp_flags::kSyn};
  const auto row = format_packet_row(r);
  CHECK(row == "1500,2,3,10.0.0.1,10.0.0.2,1234,80,6,60,2");
  CHECK(parse_packet_row(row) == r);
  CHECK_FALSE(parse_packet_row("1500,2,3,10.0.0.1,10.0.0.2,1234,80,6,0,2"));   // length 0
  CHECK_FALSE(parse_packet_row("1500,2,3,10.0.0.1,10.0.0.2,1234,80,9,60,2"));  // protocol
  CHECK_FALSE(parse_packet_row("1500,2,3"));
}

TEST_CASE("packet CSV writer refuses unsorted logs") {
  const auto dir = testutil::scratch_dir("core");
  std::vector<PacketRecord> log(2);
  log[0].ts = 10;
  log[1].ts = 5;
  for (auto& p : log) {
    p.length = 1;
    p.protocol = kUdp;
  }
  CHECK(testutil::error_kind([&] { write_packet_records(log, dir / "x.csv"); }) == ErrorKind::Consistency);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.0, 1.0, 0.1, 1e-300, 123456.789, -2.5}) CHECK(parse_double(format_double(v)) == v);
  CHECK_FALSE(parse_double("abc"));
}
