#include "sdnguard/packet.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "sdnguard/error.hpp"
#include "sdnguard/rng.hpp"

namespace sdnguard {
namespace {

constexpr std::string_view kModule = "simnet";

template <typename T>
bool parse_number(std::string_view field, T& out) {
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

std::string format_ipv4(Ipv4 addr) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (addr >> 24) & 0xffU, (addr >> 16) & 0xffU,
                (addr >> 8) & 0xffU, addr & 0xffU);
  return buf;
}

std::optional<Ipv4> parse_ipv4(std::string_view text) {
  Ipv4 out = 0;
  for (int octet = 0; octet < 4; ++octet) {
    auto dot = text.find('.');
    auto part = octet < 3 ? text.substr(0, dot) : text;
    if (octet < 3 && dot == std::string_view::npos) return std::nullopt;
    if (part.empty() || part.size() > 3) return std::nullopt;
    unsigned value = 0;
    if (!parse_number(part, value) || value > 255) return std::nullopt;
    out = (out << 8) | value;
    if (octet < 3) text.remove_prefix(dot + 1);
  }
  return out;
}

std::size_t FiveTupleHash::operator()(const FiveTuple& t) const noexcept {
  std::uint64_t a = (static_cast<std::uint64_t>(t.src_addr) << 32) | t.dst_addr;
  std::uint64_t b = (static_cast<std::uint64_t>(t.src_port) << 24) |
                    (static_cast<std::uint64_t>(t.dst_port) << 8) | t.protocol;
  return static_cast<std::size_t>(mix64(a ^ mix64(b)));
}

std::string format_packet_row(const PacketRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%d,%d,%s,%s,%u,%u,%u,%u,%u", static_cast<long long>(r.ts),
                r.switch_id, r.in_port, format_ipv4(r.src_addr).c_str(),
                format_ipv4(r.dst_addr).c_str(), r.src_port, r.dst_port, r.protocol, r.length,
                r.tcp_flags);
  return buf;
}

std::optional<PacketRecord> parse_packet_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::string_view fields[10];
  std::size_t n = 0;
  while (n < 10) {
    auto comma = line.find(',');
    fields[n++] = line.substr(0, comma);
    if (comma == std::string_view::npos) {
      line = {};
      break;
    }
    line.remove_prefix(comma + 1);
  }
  if (n != 10 || !line.empty()) return std::nullopt;

  PacketRecord r;
  long long ts = 0;
  unsigned src_port = 0, dst_port = 0, protocol = 0, flags = 0;
  if (!parse_number(fields[0], ts) || !parse_number(fields[1], r.switch_id) ||
      !parse_number(fields[2], r.in_port) || !parse_number(fields[5], src_port) ||
      !parse_number(fields[6], dst_port) || !parse_number(fields[7], protocol) ||
      !parse_number(fields[8], r.length) || !parse_number(fields[9], flags)) {
    return std::nullopt;
  }
  auto src = parse_ipv4(fields[3]);
  auto dst = parse_ipv4(fields[4]);
  if (!src || !dst || ts < 0 || src_port > 65535 || dst_port > 65535 || flags > 255 ||
      !is_supported_protocol(protocol) || r.length < 1) {
    return std::nullopt;
  }
  r.ts = ts;
  r.src_addr = *src;
  r.dst_addr = *dst;
  r.src_port = static_cast<std::uint16_t>(src_port);
  r.dst_port = static_cast<std::uint16_t>(dst_port);
  r.protocol = static_cast<std::uint8_t>(protocol);
  r.tcp_flags = static_cast<std::uint8_t>(flags);
  return r;
}

void write_packet_records(std::span<const PacketRecord> records, const std::filesystem::path& path,
                          std::span<const std::string> preamble) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].ts < records[i - 1].ts) {
      fail(ErrorKind::Consistency, kModule,
           "event log out of order at record " + std::to_string(i));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, kModule, "cannot write " + path.string());
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << kPacketCsvHeader << '\n';
  for (const auto& r : records) out << format_packet_row(r) << '\n';
  if (!out) fail(ErrorKind::Io, kModule, "write failed for " + path.string());
}

PacketReadResult read_packet_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, kModule, "cannot read " + path.string());
  PacketReadResult result;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kPacketCsvHeader) {
        fail(ErrorKind::Validation, kModule, path.string() + ": not a packet-record CSV");
      }
      header_seen = true;
      continue;
    }
    if (auto r = parse_packet_row(line)) {
      result.records.push_back(*r);
    } else {
      ++result.rejected_rows;
    }
  }
  if (!header_seen) fail(ErrorKind::Validation, kModule, path.string() + ": missing header");
  return result;
}

}  // namespace sdnguard
