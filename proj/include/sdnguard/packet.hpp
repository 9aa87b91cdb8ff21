#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdnguard {

/// Simulation time, integer microseconds since run start.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

constexpr Micros seconds_to_micros(double s) {
  return static_cast<Micros>(s * static_cast<double>(kMicrosPerSecond) + (s >= 0 ? 0.5 : -0.5));
}

using Ipv4 = std::uint32_t;

std::string format_ipv4(Ipv4 addr);
std::optional<Ipv4> parse_ipv4(std::string_view text);

constexpr Ipv4 make_ipv4(unsigned a, unsigned b, unsigned c, unsigned d) {
  return (a << 24) | (b << 16) | (c << 8) | d;
}

enum Protocol : std::uint8_t { kIcmp = 1, kTcp = 6, kUdp = 17 };

constexpr bool is_supported_protocol(unsigned p) { return p == kIcmp || p == kTcp || p == kUdp; }

namespace tcp_flags {
constexpr std::uint8_t kFin = 0x01;
constexpr std::uint8_t kSyn = 0x02;
constexpr std::uint8_t kRst = 0x04;
constexpr std::uint8_t kPsh = 0x08;
constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

/// Directional 5-tuple.
struct FiveTuple {
  Ipv4 src_addr = 0;
  Ipv4 dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;

  bool operator==(const FiveTuple&) const = default;
  auto operator<=>(const FiveTuple&) const = default;

  FiveTuple reversed() const { return {dst_addr, src_addr, dst_port, src_port, protocol}; }
};

struct FiveTupleHash {
  std::size_t operator()(const FiveTuple& t) const noexcept;
};

/// One packet observed at a switch ingress port.
struct PacketRecord {
  Micros ts = 0;
  int switch_id = 0;
  int in_port = 0;
  Ipv4 src_addr = 0;
  Ipv4 dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = kTcp;
  std::uint32_t length = 0;
  std::uint8_t tcp_flags = 0;

  FiveTuple tuple() const { return {src_addr, dst_addr, src_port, dst_port, protocol}; }
  bool operator==(const PacketRecord&) const = default;
};

inline constexpr std::string_view kPacketCsvHeader =
    "ts_us,switch_id,in_port,src_addr,dst_addr,src_port,dst_port,protocol,length,tcp_flags";

/// Write records in the packet-record CSV format. Records must already be
/// sorted by ts (consistency error otherwise). `preamble` lines are emitted
/// as `# ...` comments before the header.
void write_packet_records(std::span<const PacketRecord> records, const std::filesystem::path& path,
                          std::span<const std::string> preamble = {});

struct PacketReadResult {
  std::vector<PacketRecord> records;
  std::size_t rejected_rows = 0;
};

/// Parse a packet-record CSV. Malformed rows (bad fields, length 0, unknown
/// protocol) are skipped and counted; a missing/foreign header is an error.
PacketReadResult read_packet_records(const std::filesystem::path& path);

/// Parse a single data row; nullopt when malformed.
std::optional<PacketRecord> parse_packet_row(std::string_view line);
std::string format_packet_row(const PacketRecord& r);

}  // namespace sdnguard
