#pragma once

// Deterministic discrete-event model of an SDN data plane: switches with
// exact-match flow tables, a packet buffer for table misses, a controller
// channel with bounded PacketIn capacity, normal service hosts, and a
// SYN-flood attack generator.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sdnguard/kvconfig.hpp"
#include "sdnguard/packet.hpp"
#include "sdnguard/rng.hpp"

namespace sdnguard::simnet {

enum class HostRole { Normal, Attacker };
enum class ServiceProfile { Http, Https, Ftp, Ssh, Email };

std::string_view to_string(HostRole role);
std::string_view to_string(ServiceProfile profile);

struct HostSpec {
  Ipv4 address = 0;
  HostRole role = HostRole::Normal;
  ServiceProfile profile = ServiceProfile::Http;
};

struct Attachment {
  std::size_t host = 0;  // index into Topology::hosts
  int switch_id = 0;
  int port = 0;
};

/// Port 0 of every switch is the uplink toward servers; hosts use ports >= 1.
struct SwitchSpec {
  int id = 0;
  std::vector<int> ports;
};

inline constexpr int kUplinkPort = 0;

struct Topology {
  std::vector<SwitchSpec> switches;
  std::vector<HostSpec> hosts;
  std::vector<Attachment> attachments;
  /// PacketIn messages per second the controller parses for one switch channel.
  double controller_capacity = 5000.0;

  /// `switches` switches with `hosts_per_switch` hosts each. Host n (1-based)
  /// gets address 12.0.0.(10+n); host 1 is the attacker; the remaining hosts
  /// get service profiles per switch (HTTP, HTTPS, FTP, SSH/e-mail).
  static Topology standard(int switches = 4, int hosts_per_switch = 4);

  /// Throws a configuration error on dangling or duplicate attachments,
  /// duplicate switch ids, or duplicate ports.
  void validate() const;

  const Attachment& attachment_of(std::size_t host) const;
  std::optional<std::size_t> host_index(Ipv4 address) const;
  bool has_port(int switch_id, int port) const;
};

enum class AttackKind { SynFlood };

struct AttackSpec {
  Ipv4 attacker = 0;
  AttackKind kind = AttackKind::SynFlood;
  double intensity_bps = 20e6;
  Micros on_duration = kMicrosPerSecond;
  Micros off_duration = 5 * kMicrosPerSecond;
  Micros start = 10 * kMicrosPerSecond;
  Micros end = std::numeric_limits<Micros>::max();
  std::uint32_t packet_bytes = 60;
  std::uint16_t dst_port = 80;

  Micros period() const { return on_duration + off_duration; }
  /// Whether any on-phase overlaps [begin, end).
  bool active_during(Micros begin, Micros end) const;
  /// Number of packets emitted in one complete on-phase.
  std::uint64_t packets_per_burst() const;
};

struct SimConfig {
  std::size_t flow_table_capacity = 2000;
  std::size_t buffer_capacity = 1000;
  Micros controller_latency = 20'000;
  /// When true a single controller budget is shared by all switch channels.
  bool shared_controller_budget = false;
  Micros rule_timeout = 10 * kMicrosPerSecond;
  Micros window = kMicrosPerSecond;
  /// Persistent-session rules become permanent at the end of warm-up.
  Micros warmup = 5 * kMicrosPerSecond;
  int persistent_sessions = 4;
  Micros persistent_gap_mean = 400'000;
  /// Transient sessions per normal host per second (Poisson arrivals).
  double session_rate = 0.3;
  /// Fraction of transient sessions opened toward a profile's known servers.
  double known_server_fraction = 0.5;
};

/// Read simulator, topology, and attack settings from a declarative config.
SimConfig sim_config_from(const KvConfig& cfg);
Topology topology_from(const KvConfig& cfg);
/// Attacks are enabled when `attack.intensity_bps` > 0 (default 20e6).
std::vector<AttackSpec> attacks_from(const KvConfig& cfg);

struct PortCounters {
  std::uint64_t packets_in = 0;
  std::uint64_t flows_in = 0;
  std::uint64_t packets_out = 0;
  std::uint64_t flows_out = 0;
  std::uint64_t packet_in_sent = 0;
  std::uint64_t mitigation_drops = 0;

  bool operator==(const PortCounters&) const = default;
};

struct SwitchCounters {
  std::map<int, PortCounters> ports;
  std::uint64_t buffer_drops = 0;
  std::uint64_t controller_drops = 0;
  std::uint64_t evictions = 0;
  std::uint64_t rules_installed = 0;
  std::uint64_t rules_expired = 0;

  PortCounters total() const;
};

enum class CounterKind { FlowIn, FlowOut, PacketIn };

struct CounterEvent {
  Micros ts = 0;
  int switch_id = 0;
  int port = 0;
  CounterKind kind = CounterKind::FlowIn;
};

enum class ControlKind {
  RuleInstalled,
  RuleExpired,
  RuleEvicted,
  BufferDrop,
  ControllerDrop,
  MitigationDrop,
};

struct ControlEvent {
  Micros ts = 0;
  int switch_id = 0;
  int port = 0;
  ControlKind kind = ControlKind::RuleInstalled;
  FiveTuple key;
  std::uint64_t count = 1;  // packets affected (drop events)
};

/// Per-switch counters of one closed window, as tallied by the simulator.
struct WindowCounters {
  int switch_id = 0;
  std::int64_t window_index = 0;
  std::uint64_t flows_in = 0;
  std::uint64_t flows_out = 0;
  std::uint64_t packet_in = 0;

  bool operator==(const WindowCounters&) const = default;
};

struct StepResult {
  Micros begin = 0;
  Micros end = 0;
  std::vector<PacketRecord> packets;
  std::vector<CounterEvent> counters;
  std::vector<ControlEvent> control;
  std::vector<WindowCounters> closed_windows;
};

struct SwitchState {
  int id = 0;
  std::size_t flow_table_size = 0;
  std::size_t flow_table_capacity = 0;
  std::size_t buffer_occupancy = 0;
  std::size_t buffer_capacity = 0;
  SwitchCounters counters;
};

struct PortGuard {
  int switch_id = 0;
  int port = 0;
  Micros expiry = 0;
};

/// The simulator is a value type: copying it forks an independent replay.
class Simulator {
 public:
  Simulator(Topology topology, SimConfig config, std::uint64_t seed);

  /// Registers an attack generator; unknown attacker host or a
  /// non-positive on-duration is a configuration error.
  void inject_attack(const AttackSpec& spec);

  /// Advance the clock by `duration` and return every event generated in
  /// [clock, clock + duration).
  StepResult step(Micros duration);

  Micros clock() const { return clock_; }
  const Topology& topology() const { return topology_; }
  const SimConfig& config() const { return config_; }
  const std::vector<AttackSpec>& attacks() const { return attacks_; }

  std::vector<int> switch_ids() const;
  SwitchState switch_state(int switch_id) const;

  /// Until `expiry` the port emits no PacketIn; table misses on it are
  /// dropped. Table hits (established flows) still forward. Lapsed guards
  /// stay listed until cleared.
  void set_port_guard(int switch_id, int port, Micros expiry);
  void clear_port_guard(int switch_id, int port);
  std::vector<PortGuard> port_guards() const;

 private:
  struct ScheduledPacket {
    Micros ts = 0;
    std::uint64_t seq = 0;
    PacketRecord record;
    int session = -1;  // persistent session index, -1 for transient packets
    bool exchange_start = false;
  };
  struct LaterFirst {
    bool operator()(const ScheduledPacket& a, const ScheduledPacket& b) const {
      return a.ts != b.ts ? a.ts > b.ts : a.seq > b.seq;
    }
  };
  struct PersistentSession {
    FiveTuple forward;
  };
  struct HostGenerator {
    std::size_t host = 0;
    Rng rng{0};
    Micros next_session = 0;
    std::uint64_t seq = 0;
    std::priority_queue<ScheduledPacket, std::vector<ScheduledPacket>, LaterFirst> queue;
    std::vector<PersistentSession> sessions;
  };
  struct AttackGenerator {
    AttackSpec spec;
    Rng rng{0};
    std::int64_t phase = 0;
    std::int64_t index = 0;  // packet index within the current phase
  };
  struct Pending {
    bool admitted = false;
    std::uint32_t buffered = 0;
    int port = 0;
  };
  struct Completion {
    Micros ts = 0;
    std::size_t switch_slot = 0;
    FiveTuple key;
  };
  struct ReactiveRule {
    Micros expiry = 0;
    FiveTuple key;
  };
  struct SwitchRuntime {
    int id = 0;
    std::unordered_map<FiveTuple, bool, FiveTupleHash> table;  // value: permanent
    std::deque<ReactiveRule> reactive;                         // install order == expiry order
    std::unordered_map<FiveTuple, Pending, FiveTupleHash> pending;
    std::size_t buffer_occupancy = 0;
    std::unordered_set<FiveTuple, FiveTupleHash> window_in;
    std::unordered_set<FiveTuple, FiveTupleHash> window_out;
    WindowCounters window;
    std::int64_t budget_epoch = -1;
    std::uint64_t budget_used = 0;
    std::map<int, Micros> guards;
    SwitchCounters counters;
  };

  void generate_host_packets(HostGenerator& gen, Micros until, std::vector<PacketRecord>& out);
  void start_transient_session(HostGenerator& gen, Micros t0);
  void schedule_exchange(HostGenerator& gen, int session, Micros t);
  void generate_attack_packets(AttackGenerator& gen, Micros until, std::vector<PacketRecord>& out);

  void process_internal_until(Micros t, bool inclusive, StepResult& out);
  void advance_windows(Micros t, StepResult& out);
  void handle_packet(const PacketRecord& pkt, StepResult& out);
  void complete(const Completion& c, StepResult& out);
  void expire_front(SwitchRuntime& sw, StepResult& out);
  void install_rule(SwitchRuntime& sw, const FiveTuple& key, Micros now, StepResult& out);
  void forward(SwitchRuntime& sw, int port, const FiveTuple& key, std::uint64_t packets, Micros ts,
               StepResult& out);
  bool admit(SwitchRuntime& sw, Micros t);
  void finish_warmup();

  SwitchRuntime& runtime(int switch_id);
  const SwitchRuntime& runtime(int switch_id) const;

  Topology topology_;
  SimConfig config_;
  std::uint64_t seed_ = 0;
  Micros clock_ = 0;
  std::int64_t current_window_ = 0;
  bool warmed_up_ = false;
  std::vector<SwitchRuntime> switches_;
  std::vector<HostGenerator> hosts_;
  std::vector<AttackGenerator> attack_gens_;
  std::vector<AttackSpec> attacks_;
  std::deque<Completion> completions_;
  std::uint64_t shared_budget_used_ = 0;
  std::int64_t shared_budget_epoch_ = -1;
};

/// Write the packet records of an event log (sorted by ts) to `path`.
void emit_packet_records(std::span<const PacketRecord> log, const std::filesystem::path& path,
                         std::span<const std::string> preamble = {});

}  // namespace sdnguard::simnet
