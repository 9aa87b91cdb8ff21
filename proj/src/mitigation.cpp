#include "sdnguard/mitigation.hpp"

#include <algorithm>
#include <charconv>

#include "sdnguard/error.hpp"
#include "sdnguard/textio.hpp"

namespace sdnguard::mitigation {
namespace {

constexpr std::string_view kModule = "mitigation";

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Drop:
      return "drop";
  }
  return "drop";
}

std::vector<HandlingRule> derive_rules(std::span<const Finding> findings, Micros now, Micros t_lim) {
  if (t_lim < 0) fail(ErrorKind::Config, kModule, "t_lim must be >= 0");
  std::vector<HandlingRule> rules;
  for (const auto& f : findings) {
    if (!f.abnormal) continue;
    if (!f.switch_id || !f.port) {
      fail(ErrorKind::Attribution, kModule, "abnormal finding without switch/port attribution");
    }
    const bool seen = std::any_of(rules.begin(), rules.end(), [&](const HandlingRule& r) {
      return r.switch_id == *f.switch_id && r.port == *f.port;
    });
    if (seen) continue;
    HandlingRule r;
    r.switch_id = *f.switch_id;
    r.port = *f.port;
    r.issued = now;
    r.expiry = now + t_lim;
    rules.push_back(r);
  }
  return rules;
}

Finding finding_from_provenance(std::string_view provenance) {
  Finding f;
  if (provenance.size() < 4 || provenance[0] != 's') return f;
  const auto dash = provenance.find("-p");
  if (dash == std::string_view::npos) return f;
  const auto sw = parse_int(provenance.substr(1, dash - 1));
  const auto port = parse_int(provenance.substr(dash + 2));
  if (sw && port) {
    f.switch_id = sw;
    f.port = port;
  }
  return f;
}

std::vector<Finding> findings_from_window(const portwatch::WindowReport& report) {
  std::vector<Finding> out;
  if (report.verdict != portwatch::Verdict::Abnormal) return out;
  std::uint64_t best = 0;
  for (const auto& [port, n] : report.stats.packet_in_by_port) best = std::max(best, n);
  for (const auto& [port, n] : report.stats.packet_in_by_port) {
    if (n == best && best > 0) out.push_back({true, report.stats.switch_id, port});
  }
  if (out.empty()) out.push_back({true, report.stats.switch_id, std::nullopt});
  return out;
}

void apply_rules(simnet::Simulator& sim, std::span<const HandlingRule> rules) {
  for (const auto& r : rules) {
    if (!sim.topology().has_port(r.switch_id, r.port)) {
      fail(ErrorKind::Config, kModule,
           "rule targets unknown switch/port s" + std::to_string(r.switch_id) + "-p" + std::to_string(r.port));
    }
  }
  for (const auto& r : rules) sim.set_port_guard(r.switch_id, r.port, r.expiry);
}

std::size_t expire_rules(simnet::Simulator& sim, Micros now) {
  std::size_t removed = 0;
  for (const auto& g : sim.port_guards()) {
    if (g.expiry <= now) {
      sim.clear_port_guard(g.switch_id, g.port);
      ++removed;
    }
  }
  return removed;
}

void write_rules_csv(std::span<const HandlingRule> rules, const std::filesystem::path& path,
                     std::span<const std::string> preamble) {
  auto out = open_output(path, kModule);
  write_preamble(out, preamble);
  out << "issued_ts,switch_id,port,expiry_ts,action\n";
  for (const auto& r : rules) {
    out << r.issued << ',' << r.switch_id << ',' << r.port << ',' << r.expiry << ',' << to_string(r.action) << '\n';
  }
  if (!out) fail(ErrorKind::Io, kModule, "write failed: " + path.string());
}

}  // namespace sdnguard::mitigation
