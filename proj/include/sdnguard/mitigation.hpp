#pragma once

// Turns abnormal findings into temporary per-port handling rules: the
// attributed ingress port stops raising PacketIn, new flows on it are sent
// to the default port and dropped, and the rule lapses after t_lim.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdnguard/packet.hpp"
#include "sdnguard/portwatch.hpp"
#include "sdnguard/simnet.hpp"

namespace sdnguard::mitigation {

enum class Action { Drop };
std::string_view to_string(Action a);

/// Destination of new flows on a ruled port: the switch's default port.
inline constexpr int kDefaultPort = -1;

struct HandlingRule {
  int switch_id = 0;
  int port = 0;
  bool no_packet_in = true;
  int new_flow_port = kDefaultPort;
  Action action = Action::Drop;
  Micros issued = 0;
  Micros expiry = 0;

  bool active_at(Micros t) const { return t >= issued && t < expiry; }
};

/// One abnormal verdict with whatever attribution is available.
struct Finding {
  bool abnormal = true;
  std::optional<int> switch_id;
  std::optional<int> port;
};

inline constexpr Micros kDefaultTimeLimit = 60 * kMicrosPerSecond;

/// One rule per distinct (switch, port) among abnormal findings, in first
/// appearance order. Normal findings produce nothing. An abnormal finding
/// without switch or port is an attribution error; t_lim < 0 is a
/// configuration error. t_lim = 0 yields rules that are never active.
std::vector<HandlingRule> derive_rules(std::span<const Finding> findings, Micros now,
                                       Micros t_lim = kDefaultTimeLimit);

/// Parses a flow provenance tag "s<switch>-p<port>"; malformed tags give
/// an attribution-less finding.
Finding finding_from_provenance(std::string_view provenance);

/// Coarse-detector attribution: the port(s) with the most PacketIn
/// messages in the window. Ties yield one finding per tied port.
std::vector<Finding> findings_from_window(const portwatch::WindowReport& report);

/// Installs every rule as a port guard; unknown switch or port is a
/// configuration error and leaves the simulator untouched.
void apply_rules(simnet::Simulator& sim, std::span<const HandlingRule> rules);

/// Clears guards whose expiry is <= now; returns how many were removed.
std::size_t expire_rules(simnet::Simulator& sim, Micros now);

/// `issued_ts,switch_id,port,expiry_ts,action` (timestamps in microseconds).
void write_rules_csv(std::span<const HandlingRule> rules, const std::filesystem::path& path,
                     std::span<const std::string> preamble = {});

}  // namespace sdnguard::mitigation
