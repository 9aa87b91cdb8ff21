#include "sdnguard/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "sdnguard/error.hpp"

namespace sdnguard::simnet {
namespace {

constexpr std::string_view kModule = "simnet";
constexpr int kServersPerProfile = 4;
constexpr Micros kNever = std::numeric_limits<Micros>::max();

struct ProfileParams {
  std::uint16_t port;
  std::uint32_t fwd_min, fwd_max;
  std::uint32_t bwd_min, bwd_max;
  int packets_min, packets_max;
  double gap_mean_us;
};

ProfileParams params_for(ServiceProfile p) {
  switch (p) {
    case ServiceProfile::Http: return {80, 66, 600, 66, 1460, 4, 16, 40'000};
    case ServiceProfile::Https: return {443, 66, 800, 66, 1460, 6, 20, 40'000};
    case ServiceProfile::Ftp: return {21, 66, 300, 200, 1460, 10, 40, 25'000};
    case ServiceProfile::Ssh: return {22, 66, 200, 66, 300, 8, 30, 150'000};
    case ServiceProfile::Email: return {25, 200, 1460, 66, 200, 6, 16, 60'000};
  }
  return {80, 66, 600, 66, 1460, 4, 16, 40'000};
}

Ipv4 known_server(ServiceProfile p, int index) {
  return make_ipv4(12, 1, static_cast<unsigned>(p) + 1, static_cast<unsigned>(index) + 1);
}

Micros round_us(double us) { return static_cast<Micros>(std::llround(us)); }

Micros draw_rtt(Rng& rng) { return rng.uniform_int(1'000, 5'000); }

std::uint32_t draw_length(Rng& rng, std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint32_t>(rng.uniform_int(lo, hi));
}

std::optional<ServiceProfile> parse_profile(std::string_view s) {
  if (s == "http") return ServiceProfile::Http;
  if (s == "https") return ServiceProfile::Https;
  if (s == "ftp") return ServiceProfile::Ftp;
  if (s == "ssh") return ServiceProfile::Ssh;
  if (s == "email") return ServiceProfile::Email;
  return std::nullopt;
}

double attack_interval_us(const AttackSpec& spec) {
  return static_cast<double>(spec.packet_bytes) * 8.0 * 1e6 / spec.intensity_bps;
}

}  // namespace

std::string_view to_string(HostRole role) {
  return role == HostRole::Attacker ? "attacker" : "normal";
}

std::string_view to_string(ServiceProfile profile) {
  switch (profile) {
    case ServiceProfile::Http: return "http";
    case ServiceProfile::Https: return "https";
    case ServiceProfile::Ftp: return "ftp";
    case ServiceProfile::Ssh: return "ssh";
    case ServiceProfile::Email: return "email";
  }
  return "http";
}

// ---------------------------------------------------------------------------
// Topology

Topology Topology::standard(int switches, int hosts_per_switch) {
  if (switches < 1 || hosts_per_switch < 1 || switches * hosts_per_switch > 240) {
    fail(ErrorKind::Config, kModule, "standard topology needs 1..240 hosts in total");
  }
  Topology topo;
  for (int s = 0; s < switches; ++s) {
    SwitchSpec sw{s + 1, {kUplinkPort}};
    for (int p = 1; p <= hosts_per_switch; ++p) sw.ports.push_back(p);
    topo.switches.push_back(std::move(sw));
  }
  for (int n = 1; n <= switches * hosts_per_switch; ++n) {
    const int s = (n - 1) / hosts_per_switch;
    const int p = (n - 1) % hosts_per_switch + 1;
    HostSpec host;
    host.address = make_ipv4(12, 0, 0, static_cast<unsigned>(10 + n));
    host.role = n == 1 ? HostRole::Attacker : HostRole::Normal;
    switch (s % 4) {
      case 0: host.profile = ServiceProfile::Http; break;
      case 1: host.profile = ServiceProfile::Https; break;
      case 2: host.profile = ServiceProfile::Ftp; break;
      default:
        host.profile = p <= (hosts_per_switch + 1) / 2 ? ServiceProfile::Ssh : ServiceProfile::Email;
    }
    topo.hosts.push_back(host);
    topo.attachments.push_back({static_cast<std::size_t>(n - 1), s + 1, p});
  }
  return topo;
}

void Topology::validate() const {
  if (!(controller_capacity > 0)) {
    fail(ErrorKind::Config, kModule, "controller capacity must be positive");
  }
  std::set<int> ids;
  for (const auto& sw : switches) {
    if (!ids.insert(sw.id).second) {
      fail(ErrorKind::Config, kModule, "duplicate switch id " + std::to_string(sw.id));
    }
    std::set<int> ports(sw.ports.begin(), sw.ports.end());
    if (ports.size() != sw.ports.size()) {
      fail(ErrorKind::Config, kModule, "duplicate port on switch " + std::to_string(sw.id));
    }
    if (!ports.contains(kUplinkPort)) {
      fail(ErrorKind::Config, kModule, "switch " + std::to_string(sw.id) + " lacks uplink port 0");
    }
  }
  std::vector<int> attached(hosts.size(), 0);
  std::set<std::pair<int, int>> used_ports;
  std::set<Ipv4> addresses;
  for (const auto& h : hosts) {
    if (!addresses.insert(h.address).second) {
      fail(ErrorKind::Config, kModule, "duplicate host address " + format_ipv4(h.address));
    }
  }
  for (const auto& a : attachments) {
    if (a.host >= hosts.size()) {
      fail(ErrorKind::Config, kModule, "dangling attachment to host #" + std::to_string(a.host));
    }
    if (!has_port(a.switch_id, a.port)) {
      fail(ErrorKind::Config, kModule,
           "dangling attachment: switch " + std::to_string(a.switch_id) + " has no port " +
               std::to_string(a.port));
    }
    if (a.port == kUplinkPort) {
      fail(ErrorKind::Config, kModule, "hosts cannot attach to the uplink port");
    }
    if (!used_ports.insert({a.switch_id, a.port}).second) {
      fail(ErrorKind::Config, kModule,
           "two hosts on switch " + std::to_string(a.switch_id) + " port " + std::to_string(a.port));
    }
    ++attached[a.host];
  }
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    if (attached[i] != 1) {
      fail(ErrorKind::Config, kModule,
           "host " + format_ipv4(hosts[i].address) + " must attach to exactly one switch port");
    }
  }
}

const Attachment& Topology::attachment_of(std::size_t host) const {
  for (const auto& a : attachments) {
    if (a.host == host) return a;
  }
  fail(ErrorKind::Config, kModule, "host #" + std::to_string(host) + " is not attached");
}

std::optional<std::size_t> Topology::host_index(Ipv4 address) const {
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    if (hosts[i].address == address) return i;
  }
  return std::nullopt;
}

bool Topology::has_port(int switch_id, int port) const {
  for (const auto& sw : switches) {
    if (sw.id == switch_id) {
      return std::find(sw.ports.begin(), sw.ports.end(), port) != sw.ports.end();
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// AttackSpec

bool AttackSpec::active_during(Micros begin, Micros finish) const {
  if (intensity_bps <= 0 || on_duration <= 0) return false;
  const Micros stop = std::min(finish, end);
  if (stop <= start || stop <= begin) return false;
  std::int64_t k = begin > start ? (begin - start) / period() : 0;
  for (;; ++k) {
    const Micros phase_start = start + k * period();
    if (phase_start >= stop) return false;
    const Micros phase_end = std::min(phase_start + on_duration, end);
    if (phase_end > begin && phase_start < stop) return true;
  }
}

std::uint64_t AttackSpec::packets_per_burst() const {
  if (intensity_bps <= 0 || on_duration <= 0) return 0;
  const double interval = attack_interval_us(*this);
  std::uint64_t n = 0;
  while (static_cast<double>(n) * interval < static_cast<double>(on_duration)) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Config

SimConfig sim_config_from(const KvConfig& cfg) {
  SimConfig c;
  c.flow_table_capacity =
      static_cast<std::size_t>(cfg.get_int("sim.flow_table_capacity", 2000));
  c.buffer_capacity = static_cast<std::size_t>(cfg.get_int("sim.buffer_capacity", 1000));
  c.controller_latency = seconds_to_micros(cfg.get_double("sim.controller_latency_ms", 20) / 1e3);
  c.shared_controller_budget = cfg.get_bool("sim.shared_controller_budget", false);
  c.rule_timeout = seconds_to_micros(cfg.get_double("sim.rule_timeout_s", 10));
  c.window = seconds_to_micros(cfg.get_double("sim.window_s", 1));
  c.warmup = seconds_to_micros(cfg.get_double("sim.warmup_s", 5));
  c.persistent_sessions = static_cast<int>(cfg.get_int("sim.persistent_sessions", 4));
  c.persistent_gap_mean = seconds_to_micros(cfg.get_double("sim.persistent_gap_ms", 400) / 1e3);
  c.session_rate = cfg.get_double("sim.session_rate", 0.3);
  c.known_server_fraction = cfg.get_double("sim.known_server_fraction", 0.5);
  return c;
}

Topology topology_from(const KvConfig& cfg) {
  Topology topo = Topology::standard(static_cast<int>(cfg.get_int("topology.switches", 4)),
                                     static_cast<int>(cfg.get_int("topology.hosts_per_switch", 4)));
  topo.controller_capacity = cfg.get_double("sim.controller_capacity", 5000);

  // Explicit host list: topology.host.N = <addr> <switch> <port> <role> <profile>
  std::vector<std::pair<std::string, std::string>> explicit_hosts;
  for (const auto& [key, value] : cfg.values()) {
    if (key.rfind("topology.host.", 0) == 0) explicit_hosts.emplace_back(key, value);
  }
  if (!explicit_hosts.empty()) {
    topo.hosts.clear();
    topo.attachments.clear();
    std::set<int> switch_ids;
    std::map<int, std::set<int>> ports;
    for (const auto& [key, value] : explicit_hosts) {
      cfg.raw(key);
      std::istringstream in(value);
      std::string addr, role, profile;
      int sw = 0, port = 0;
      if (!(in >> addr >> sw >> port >> role >> profile)) {
        fail(ErrorKind::Config, kModule, key + ": expected '<addr> <switch> <port> <role> <profile>'");
      }
      auto ip = parse_ipv4(addr);
      auto prof = parse_profile(profile);
      if (!ip || !prof || (role != "normal" && role != "attacker")) {
        fail(ErrorKind::Config, kModule, key + ": malformed host entry '" + value + "'");
      }
      topo.hosts.push_back({*ip, role == "attacker" ? HostRole::Attacker : HostRole::Normal, *prof});
      topo.attachments.push_back({topo.hosts.size() - 1, sw, port});
      ports[sw].insert(port);
    }
    // Switches are declared through topology.switches; host entries may only
    // reference their ports (ports 1..hosts_per_switch).
  }
  topo.validate();
  return topo;
}

std::vector<AttackSpec> attacks_from(const KvConfig& cfg) {
  AttackSpec spec;
  const auto host = cfg.get_string("attack.host", "12.0.0.11");
  auto ip = parse_ipv4(host);
  if (!ip) fail(ErrorKind::Config, kModule, "attack.host must be a dotted-quad address");
  spec.attacker = *ip;
  spec.intensity_bps = cfg.get_double("attack.intensity_bps", 20e6);
  spec.on_duration = seconds_to_micros(cfg.get_double("attack.on_s", 1));
  spec.off_duration = seconds_to_micros(cfg.get_double("attack.off_s", 5));
  spec.start = seconds_to_micros(cfg.get_double("attack.start_s", 10));
  const double end_s = cfg.get_double("attack.end_s", -1);
  spec.end = end_s < 0 ? kNever : seconds_to_micros(end_s);
  spec.packet_bytes = static_cast<std::uint32_t>(cfg.get_int("attack.packet_bytes", 60));
  spec.dst_port = static_cast<std::uint16_t>(cfg.get_int("attack.dst_port", 80));
  if (!cfg.get_bool("attack.enabled", true) || spec.intensity_bps <= 0) return {};
  return {spec};
}

PortCounters SwitchCounters::total() const {
  PortCounters t;
  for (const auto& [port, c] : ports) {
    t.packets_in += c.packets_in;
    t.flows_in += c.flows_in;
    t.packets_out += c.packets_out;
    t.flows_out += c.flows_out;
    t.packet_in_sent += c.packet_in_sent;
    t.mitigation_drops += c.mitigation_drops;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(Topology topology, SimConfig config, std::uint64_t seed)
    : topology_(std::move(topology)), config_(config), seed_(seed) {
  topology_.validate();
  if (config_.window <= 0) fail(ErrorKind::Config, kModule, "window length must be positive");
  if (config_.flow_table_capacity == 0 || config_.buffer_capacity == 0) {
    fail(ErrorKind::Config, kModule, "flow table and buffer capacities must be positive");
  }
  if (config_.controller_latency < 0 || config_.rule_timeout <= 0 || config_.warmup < 0) {
    fail(ErrorKind::Config, kModule, "latency, rule timeout and warm-up must be non-negative");
  }
  if (config_.persistent_sessions < 0 || config_.session_rate < 0 ||
      config_.persistent_gap_mean <= 0 || config_.known_server_fraction < 0 ||
      config_.known_server_fraction > 1) {
    fail(ErrorKind::Config, kModule, "invalid normal-traffic parameters");
  }

  for (const auto& spec : topology_.switches) {
    SwitchRuntime sw;
    sw.id = spec.id;
    sw.window.switch_id = spec.id;
    for (int p : spec.ports) sw.counters.ports[p] = {};
    switches_.push_back(std::move(sw));
  }

  std::map<int, std::size_t> permanent_per_switch;
  for (std::size_t i = 0; i < topology_.hosts.size(); ++i) {
    const auto& host = topology_.hosts[i];
    if (host.role != HostRole::Normal) continue;
    HostGenerator gen;
    gen.host = i;
    gen.rng = Rng(derive_seed(seed_, "host", i));
    const auto params = params_for(host.profile);
    for (int k = 0; k < config_.persistent_sessions; ++k) {
      PersistentSession s;
      s.forward = {host.address, known_server(host.profile, k % kServersPerProfile),
                   static_cast<std::uint16_t>(gen.rng.uniform_int(1024, 65535)), params.port, kTcp};
      gen.sessions.push_back(s);
    }
    for (int k = 0; k < config_.persistent_sessions; ++k) {
      schedule_exchange(gen, k,
                        round_us(gen.rng.exponential(static_cast<double>(config_.persistent_gap_mean))));
    }
    gen.next_session = config_.session_rate > 0
                           ? round_us(gen.rng.exponential(1e6 / config_.session_rate))
                           : kNever;
    permanent_per_switch[topology_.attachment_of(i).switch_id] += 2 * gen.sessions.size();
    hosts_.push_back(std::move(gen));
  }
  for (const auto& [sw, n] : permanent_per_switch) {
    if (n > config_.flow_table_capacity) {
      fail(ErrorKind::Config, kModule,
           "persistent sessions need " + std::to_string(n) + " rules on switch " +
               std::to_string(sw) + ", above the flow-table capacity");
    }
  }
}

void Simulator::inject_attack(const AttackSpec& spec) {
  auto host = topology_.host_index(spec.attacker);
  if (!host) {
    fail(ErrorKind::Config, kModule, "unknown attacker host " + format_ipv4(spec.attacker));
  }
  if (spec.on_duration <= 0) fail(ErrorKind::Config, kModule, "attack on-duration must be positive");
  if (spec.off_duration < 0) fail(ErrorKind::Config, kModule, "attack off-duration must be >= 0");
  if (spec.intensity_bps < 0) fail(ErrorKind::Config, kModule, "attack intensity must be >= 0");
  if (spec.packet_bytes < 1) fail(ErrorKind::Config, kModule, "attack packet size must be >= 1");
  AttackGenerator gen;
  gen.spec = spec;
  gen.rng = Rng(derive_seed(seed_, "attack", attacks_.size()));
  // Skip bursts that lie entirely in the past.
  if (spec.period() > 0 && clock_ > spec.start) {
    gen.phase = (clock_ - spec.start) / spec.period();
  }
  if (spec.intensity_bps > 0) {
    const double interval = attack_interval_us(spec);
    const Micros phase_start = spec.start + gen.phase * spec.period();
    while (phase_start + static_cast<Micros>(std::floor(static_cast<double>(gen.index) * interval)) <
               clock_ &&
           static_cast<double>(gen.index) * interval < static_cast<double>(spec.on_duration)) {
      ++gen.index;
    }
  }
  attacks_.push_back(spec);
  attack_gens_.push_back(std::move(gen));
}

std::vector<int> Simulator::switch_ids() const {
  std::vector<int> ids;
  for (const auto& sw : switches_) ids.push_back(sw.id);
  return ids;
}

Simulator::SwitchRuntime& Simulator::runtime(int switch_id) {
  for (auto& sw : switches_) {
    if (sw.id == switch_id) return sw;
  }
  fail(ErrorKind::Config, kModule, "unknown switch " + std::to_string(switch_id));
}

const Simulator::SwitchRuntime& Simulator::runtime(int switch_id) const {
  for (const auto& sw : switches_) {
    if (sw.id == switch_id) return sw;
  }
  fail(ErrorKind::Config, kModule, "unknown switch " + std::to_string(switch_id));
}

SwitchState Simulator::switch_state(int switch_id) const {
  const auto& sw = runtime(switch_id);
  SwitchState s;
  s.id = sw.id;
  s.flow_table_size = sw.table.size();
  s.flow_table_capacity = config_.flow_table_capacity;
  s.buffer_occupancy = sw.buffer_occupancy;
  s.buffer_capacity = config_.buffer_capacity;
  s.counters = sw.counters;
  return s;
}

void Simulator::set_port_guard(int switch_id, int port, Micros expiry) {
  if (!topology_.has_port(switch_id, port)) {
    fail(ErrorKind::Config, kModule,
         "no port " + std::to_string(port) + " on switch " + std::to_string(switch_id));
  }
  auto& guards = runtime(switch_id).guards;
  auto [it, inserted] = guards.emplace(port, expiry);
  if (!inserted) it->second = std::max(it->second, expiry);
}

void Simulator::clear_port_guard(int switch_id, int port) {
  if (!topology_.has_port(switch_id, port)) {
    fail(ErrorKind::Config, kModule,
         "no port " + std::to_string(port) + " on switch " + std::to_string(switch_id));
  }
  runtime(switch_id).guards.erase(port);
}

std::vector<PortGuard> Simulator::port_guards() const {
  std::vector<PortGuard> out;
  for (const auto& sw : switches_) {
    for (const auto& [port, expiry] : sw.guards) out.push_back({sw.id, port, expiry});
  }
  return out;
}

// --- traffic generation ----------------------------------------------------

void Simulator::schedule_exchange(HostGenerator& gen, int session, Micros t) {
  const auto& host = topology_.hosts[gen.host];
  const auto& att = topology_.attachment_of(gen.host);
  const auto params = params_for(host.profile);
  const auto& fwd = gen.sessions[static_cast<std::size_t>(session)].forward;

  ScheduledPacket request;
  request.ts = t;
  request.seq = gen.seq++;
  request.session = session;
  request.exchange_start = true;
  request.record = {t, att.switch_id, att.port, fwd.src_addr, fwd.dst_addr, fwd.src_port,
                    fwd.dst_port, kTcp, draw_length(gen.rng, params.fwd_min, params.fwd_max),
                    static_cast<std::uint8_t>(tcp_flags::kAck | tcp_flags::kPsh)};
  gen.queue.push(request);

  ScheduledPacket reply;
  reply.ts = t + draw_rtt(gen.rng);
  reply.seq = gen.seq++;
  reply.session = session;
  reply.record = {reply.ts, att.switch_id, kUplinkPort, fwd.dst_addr, fwd.src_addr, fwd.dst_port,
                  fwd.src_port, kTcp, draw_length(gen.rng, params.bwd_min, params.bwd_max),
                  tcp_flags::kAck};
  gen.queue.push(reply);
}

void Simulator::start_transient_session(HostGenerator& gen, Micros t0) {
  const auto& host = topology_.hosts[gen.host];
  const auto& att = topology_.attachment_of(gen.host);
  const auto params = params_for(host.profile);

  Ipv4 server = 0;
  if (gen.rng.bernoulli(config_.known_server_fraction)) {
    server = known_server(host.profile,
                          static_cast<int>(gen.rng.uniform_int(0, kServersPerProfile - 1)));
  } else {
    server = make_ipv4(12, 2, static_cast<unsigned>(gen.rng.uniform_int(0, 255)),
                       static_cast<unsigned>(gen.rng.uniform_int(1, 254)));
  }
  const auto src_port = static_cast<std::uint16_t>(gen.rng.uniform_int(1024, 65535));
  const auto n = gen.rng.uniform_int(params.packets_min, params.packets_max);

  Micros t = t0;
  for (std::int64_t k = 0; k < n; ++k) {
    const bool forward = k % 2 == 0;
    if (k > 0) t += forward ? round_us(gen.rng.exponential(params.gap_mean_us)) : draw_rtt(gen.rng);
    ScheduledPacket sp;
    sp.ts = t;
    sp.seq = gen.seq++;
    if (forward) {
      const bool syn = k == 0;
      sp.record = {t,        att.switch_id, att.port, host.address, server, src_port, params.port,
                   kTcp,     syn ? 74U : draw_length(gen.rng, params.fwd_min, params.fwd_max),
                   syn ? tcp_flags::kSyn : static_cast<std::uint8_t>(tcp_flags::kAck | tcp_flags::kPsh)};
    } else {
      sp.record = {t,    att.switch_id, kUplinkPort, server, host.address, params.port, src_port,
                   kTcp, draw_length(gen.rng, params.bwd_min, params.bwd_max),
                   k == 1 ? static_cast<std::uint8_t>(tcp_flags::kSyn | tcp_flags::kAck)
                          : tcp_flags::kAck};
    }
    gen.queue.push(sp);
  }
}

void Simulator::generate_host_packets(HostGenerator& gen, Micros until,
                                      std::vector<PacketRecord>& out) {
  for (;;) {
    const Micros next_packet = gen.queue.empty() ? kNever : gen.queue.top().ts;
    if (gen.next_session < until && gen.next_session <= next_packet) {
      start_transient_session(gen, gen.next_session);
      gen.next_session += round_us(gen.rng.exponential(1e6 / config_.session_rate));
      continue;
    }
    if (next_packet >= until) break;
    ScheduledPacket sp = gen.queue.top();
    gen.queue.pop();
    out.push_back(sp.record);
    if (sp.exchange_start) {
      schedule_exchange(
          gen, sp.session,
          sp.ts + std::max<Micros>(
                      1, round_us(gen.rng.exponential(static_cast<double>(config_.persistent_gap_mean)))));
    }
  }
}

void Simulator::generate_attack_packets(AttackGenerator& gen, Micros until,
                                        std::vector<PacketRecord>& out) {
  const auto& spec = gen.spec;
  if (spec.intensity_bps <= 0) return;
  const auto& att = topology_.attachment_of(*topology_.host_index(spec.attacker));
  const double interval = attack_interval_us(spec);
  for (;;) {
    const Micros phase_start = spec.start + gen.phase * spec.period();
    if (phase_start >= spec.end || phase_start >= until) return;
    const Micros phase_end = std::min(phase_start + spec.on_duration, spec.end);
    const double offset = static_cast<double>(gen.index) * interval;
    const Micros ts = phase_start + static_cast<Micros>(std::floor(offset));
    if (offset >= static_cast<double>(spec.on_duration) || ts >= phase_end) {
      if (spec.period() <= 0) return;
      ++gen.phase;
      gen.index = 0;
      continue;
    }
    if (ts >= until) return;
    PacketRecord r;
    r.ts = ts;
    r.switch_id = att.switch_id;
    r.in_port = att.port;
    r.src_addr = spec.attacker;
    r.dst_addr = static_cast<Ipv4>(gen.rng.next() >> 32);
    r.src_port = static_cast<std::uint16_t>(gen.rng.uniform_int(1024, 65535));
    r.dst_port = spec.dst_port;
    r.protocol = kTcp;
    r.length = spec.packet_bytes;
    r.tcp_flags = tcp_flags::kSyn;
    out.push_back(r);
    ++gen.index;
  }
}

// --- switch/controller dynamics --------------------------------------------

StepResult Simulator::step(Micros duration) {
  if (duration < 0) fail(ErrorKind::Config, kModule, "step duration must be >= 0");
  StepResult out;
  out.begin = clock_;
  out.end = clock_ + duration;
  if (duration == 0) return out;
  const Micros until = out.end;

  std::vector<PacketRecord> batch;
  for (auto& gen : hosts_) generate_host_packets(gen, until, batch);
  for (auto& gen : attack_gens_) generate_attack_packets(gen, until, batch);
  std::stable_sort(batch.begin(), batch.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });

  out.counters.reserve(batch.size() * 2);
  for (const auto& pkt : batch) {
    process_internal_until(pkt.ts, true, out);
    advance_windows(pkt.ts, out);
    handle_packet(pkt, out);
  }
  process_internal_until(until, false, out);
  advance_windows(until, out);
  clock_ = until;
  out.packets = std::move(batch);
  return out;
}

void Simulator::process_internal_until(Micros t, bool inclusive, StepResult& out) {
  auto due = [&](Micros ts) { return inclusive ? ts <= t : ts < t; };
  for (;;) {
    enum class Kind { None, Warmup, Expiry, Completion } kind = Kind::None;
    Micros best = kNever;
    std::size_t slot = 0;
    if (!warmed_up_ && due(config_.warmup)) {
      kind = Kind::Warmup;
      best = config_.warmup;
    }
    for (std::size_t i = 0; i < switches_.size(); ++i) {
      const auto& q = switches_[i].reactive;
      if (!q.empty() && due(q.front().expiry) && q.front().expiry < best) {
        kind = Kind::Expiry;
        best = q.front().expiry;
        slot = i;
      }
    }
    if (!completions_.empty() && due(completions_.front().ts) && completions_.front().ts < best) {
      kind = Kind::Completion;
      best = completions_.front().ts;
    }
    if (kind == Kind::None) return;
    advance_windows(best, out);
    switch (kind) {
      case Kind::Warmup: finish_warmup(); break;
      case Kind::Expiry: expire_front(switches_[slot], out); break;
      case Kind::Completion: {
        const Completion c = completions_.front();
        completions_.pop_front();
        complete(c, out);
        break;
      }
      case Kind::None: break;
    }
  }
}

void Simulator::advance_windows(Micros t, StepResult& out) {
  while ((current_window_ + 1) * config_.window <= t) {
    for (auto& sw : switches_) {
      sw.window.window_index = current_window_;
      out.closed_windows.push_back(sw.window);
      sw.window = WindowCounters{sw.id, current_window_ + 1, 0, 0, 0};
      sw.window_in.clear();
      sw.window_out.clear();
    }
    ++current_window_;
  }
}

void Simulator::finish_warmup() {
  warmed_up_ = true;
  std::unordered_set<FiveTuple, FiveTupleHash> promoted;
  for (const auto& gen : hosts_) {
    const int sw_id = topology_.attachment_of(gen.host).switch_id;
    auto& sw = runtime(sw_id);
    for (const auto& s : gen.sessions) {
      for (const auto& key : {s.forward, s.forward.reversed()}) {
        if (sw.table.contains(key)) promoted.insert(key);
        sw.table[key] = true;
      }
    }
  }
  for (auto& sw : switches_) {
    std::erase_if(sw.reactive, [&](const ReactiveRule& r) { return promoted.contains(r.key); });
    while (sw.table.size() > config_.flow_table_capacity && !sw.reactive.empty()) {
      sw.table.erase(sw.reactive.front().key);
      sw.reactive.pop_front();
      ++sw.counters.evictions;
    }
  }
}

void Simulator::expire_front(SwitchRuntime& sw, StepResult& out) {
  const ReactiveRule rule = sw.reactive.front();
  sw.reactive.pop_front();
  sw.table.erase(rule.key);
  ++sw.counters.rules_expired;
  out.control.push_back({rule.expiry, sw.id, 0, ControlKind::RuleExpired, rule.key, 1});
}

void Simulator::install_rule(SwitchRuntime& sw, const FiveTuple& key, Micros now, StepResult& out) {
  if (sw.table.contains(key)) return;
  if (sw.table.size() >= config_.flow_table_capacity) {
    if (sw.reactive.empty()) return;  // table full of permanent rules
    const ReactiveRule victim = sw.reactive.front();
    sw.reactive.pop_front();
    sw.table.erase(victim.key);
    ++sw.counters.evictions;
    out.control.push_back({now, sw.id, 0, ControlKind::RuleEvicted, victim.key, 1});
  }
  sw.table.emplace(key, false);
  sw.reactive.push_back({now + config_.rule_timeout, key});
  ++sw.counters.rules_installed;
  out.control.push_back({now, sw.id, 0, ControlKind::RuleInstalled, key, 1});
}

void Simulator::forward(SwitchRuntime& sw, int port, const FiveTuple& key, std::uint64_t packets,
                        Micros ts, StepResult& out) {
  auto& pc = sw.counters.ports[port];
  pc.packets_out += packets;
  // A flow counts as forwarded in a window only if it entered in that window,
  // so flows_out never exceeds flows_in.
  if (sw.window_in.contains(key) && sw.window_out.insert(key).second) {
    ++pc.flows_out;
    ++sw.window.flows_out;
    out.counters.push_back({ts, sw.id, port, CounterKind::FlowOut});
  }
}

bool Simulator::admit(SwitchRuntime& sw, Micros t) {
  const std::int64_t epoch = t / kMicrosPerSecond;
  std::int64_t& budget_epoch = config_.shared_controller_budget ? shared_budget_epoch_ : sw.budget_epoch;
  std::uint64_t& used = config_.shared_controller_budget ? shared_budget_used_ : sw.budget_used;
  if (epoch != budget_epoch) {
    budget_epoch = epoch;
    used = 0;
  }
  if (static_cast<double>(used + 1) > topology_.controller_capacity) return false;
  ++used;
  return true;
}

void Simulator::handle_packet(const PacketRecord& pkt, StepResult& out) {
  auto& sw = runtime(pkt.switch_id);
  const FiveTuple key = pkt.tuple();
  auto& pc = sw.counters.ports[pkt.in_port];
  ++pc.packets_in;
  if (sw.window_in.insert(key).second) {
    ++pc.flows_in;
    ++sw.window.flows_in;
    out.counters.push_back({pkt.ts, sw.id, pkt.in_port, CounterKind::FlowIn});
  }

  if (sw.table.contains(key)) {
    forward(sw, pkt.in_port, key, 1, pkt.ts, out);
    return;
  }

  if (auto g = sw.guards.find(pkt.in_port); g != sw.guards.end() && pkt.ts < g->second) {
    ++pc.mitigation_drops;
    out.control.push_back({pkt.ts, sw.id, pkt.in_port, ControlKind::MitigationDrop, key, 1});
    return;
  }

  // Packets of a flow with an outstanding request wait behind it.
  if (auto it = sw.pending.find(key); it != sw.pending.end()) {
    if (sw.buffer_occupancy < config_.buffer_capacity) {
      ++sw.buffer_occupancy;
      ++it->second.buffered;
    } else {
      ++sw.counters.buffer_drops;
      out.control.push_back({pkt.ts, sw.id, pkt.in_port, ControlKind::BufferDrop, key, 1});
    }
    return;
  }

  ++pc.packet_in_sent;
  ++sw.window.packet_in;
  out.counters.push_back({pkt.ts, sw.id, pkt.in_port, CounterKind::PacketIn});

  Pending pending;
  pending.admitted = admit(sw, pkt.ts);
  pending.port = pkt.in_port;
  if (sw.buffer_occupancy < config_.buffer_capacity) {
    ++sw.buffer_occupancy;
    pending.buffered = 1;
  } else {
    ++sw.counters.buffer_drops;
    out.control.push_back({pkt.ts, sw.id, pkt.in_port, ControlKind::BufferDrop, key, 1});
  }
  sw.pending.emplace(key, pending);
  const auto slot = static_cast<std::size_t>(&sw - switches_.data());
  completions_.push_back({pkt.ts + config_.controller_latency, slot, key});
}

void Simulator::complete(const Completion& c, StepResult& out) {
  auto& sw = switches_[c.switch_slot];
  auto it = sw.pending.find(c.key);
  if (it == sw.pending.end()) {
    fail(ErrorKind::Consistency, kModule, "controller reply without a pending request");
  }
  const Pending p = it->second;
  sw.pending.erase(it);
  sw.buffer_occupancy -= p.buffered;
  if (p.admitted) {
    install_rule(sw, c.key, c.ts, out);
    if (p.buffered > 0) forward(sw, p.port, c.key, p.buffered, c.ts, out);
  } else {
    sw.counters.controller_drops += std::max<std::uint64_t>(p.buffered, 1);
    out.control.push_back({c.ts, sw.id, p.port, ControlKind::ControllerDrop, c.key,
                           std::max<std::uint64_t>(p.buffered, 1)});
  }
}

void emit_packet_records(std::span<const PacketRecord> log, const std::filesystem::path& path,
                         std::span<const std::string> preamble) {
  write_packet_records(log, path, preamble);
}

}  // namespace sdnguard::simnet
