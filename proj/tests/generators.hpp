#pragma once

// Random inputs shared by unit tests and the acceptance run.

#include <vector>

#include "sdnguard/flowmeter.hpp"
#include "sdnguard/rng.hpp"

namespace gen {

/// Flow with 1..60 packets, mixed directions, and gaps that sometimes exceed
/// a 5 s activity timeout so both active and idle periods occur.
inline sdnguard::flowmeter::FlowRecord random_flow(sdnguard::Rng& rng) {
  using namespace sdnguard;
  flowmeter::FlowRecord f;
  const std::uint8_t protocols[] = {kTcp, kUdp, kIcmp};
  f.key = {make_ipv4(10, 0, 0, 1), make_ipv4(10, 0, 0, 2), 1000, 80,
           protocols[rng.uniform_int(0, 2)]};
  f.switch_id = static_cast<int>(rng.uniform_int(1, 4));
  f.in_port = static_cast<int>(rng.uniform_int(1, 4));
  const auto n = rng.uniform_int(1, 60);
  Micros t = rng.uniform_int(0, 1'000'000);
  for (std::int64_t i = 0; i < n; ++i) {
    if (i > 0) {
      t += rng.bernoulli(0.1) ? rng.uniform_int(5'000'001, 20'000'000) : rng.uniform_int(0, 300'000);
    }
    f.packets.push_back({t, static_cast<std::uint32_t>(rng.uniform_int(40, 1500)), i == 0 || rng.bernoulli(0.6)});
  }
  return f;
}

}  // namespace gen
