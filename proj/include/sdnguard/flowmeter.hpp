#pragma once

// Bidirectional flow assembly and the 48 per-flow statistical features.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdnguard/packet.hpp"

namespace sdnguard::flowmeter {

inline constexpr std::size_t kFeatureCount = 48;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "Protocol",
    "Flow duration",
    "total Fwd Packet",
    "total Bwd packets",
    "total Length of Fwd Packet",
    "total Length of Bwd Packet",
    "Fwd Packet Length Min",
    "Fwd Packet Length Max",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Min",
    "Bwd Packet Length Max",
    "Bwd Packet Length Mean",
    "Bwd Packet Length Std",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Min",
    "Fwd IAT Max",
    "Fwd IAT Mean",
    "Fwd IAT Std",
    "Fwd IAT Total",
    "Bwd IAT Min",
    "Bwd IAT Max",
    "Bwd IAT Mean",
    "Bwd IAT Std",
    "Bwd IAT Total",
    "Fwd Header Length",
    "Bwd Header Length",
    "FWD Packets/s",
    "Bwd Packets/s",
    "Packet Length Min",
    "Packet Length Max",
    "Packet Length Mean",
    "Packet Length Std",
    "Packet Length Variance",
    "Average Packet Size",
    "Active Min",
    "Active Mean",
    "Active Max",
    "Active Std",
    "Idle Min",
    "Idle Mean",
    "Idle Max",
    "Idle Std",
};

/// Index of each feature in the vector, in the order above.
enum Feature : std::size_t {
  kProtocol, kFlowDuration, kTotalFwdPackets, kTotalBwdPackets, kTotalFwdLength, kTotalBwdLength,
  kFwdLenMin, kFwdLenMax, kFwdLenMean, kFwdLenStd,
  kBwdLenMin, kBwdLenMax, kBwdLenMean, kBwdLenStd,
  kFlowBytesPerSec, kFlowPacketsPerSec,
  kFlowIatMean, kFlowIatStd, kFlowIatMax, kFlowIatMin,
  kFwdIatMin, kFwdIatMax, kFwdIatMean, kFwdIatStd, kFwdIatTotal,
  kBwdIatMin, kBwdIatMax, kBwdIatMean, kBwdIatStd, kBwdIatTotal,
  kFwdHeaderLength, kBwdHeaderLength, kFwdPacketsPerSec, kBwdPacketsPerSec,
  kPktLenMin, kPktLenMax, kPktLenMean, kPktLenStd, kPktLenVariance, kAvgPacketSize,
  kActiveMin, kActiveMean, kActiveMax, kActiveStd,
  kIdleMin, kIdleMean, kIdleMax, kIdleStd,
};

struct FlowPacket {
  Micros ts = 0;
  std::uint32_t length = 0;
  bool forward = true;
};

struct FlowRecord {
  FiveTuple key;  // oriented by the first packet
  std::vector<FlowPacket> packets;
  int switch_id = 0;
  int in_port = 0;

  Micros first_ts() const { return packets.front().ts; }
  Micros last_ts() const { return packets.back().ts; }
  std::string provenance() const;
};

struct Timeouts {
  double flow_timeout_s = 120.0;
  double activity_timeout_s = 5.0;
};

struct AssembleResult {
  std::vector<FlowRecord> flows;  // ordered by first packet
  std::size_t rejected_rows = 0;
};

/// Groups packets by (switch, bidirectional 5-tuple). A gap larger than the
/// flow timeout since the flow's previous packet starts a new flow.
/// Unsorted input is an ordering error; malformed records (length 0,
/// unsupported protocol) are skipped and counted.
AssembleResult assemble_flows(std::span<const PacketRecord> records, const Timeouts& timeouts = {});

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  std::string label;  // empty when unlabeled
  std::string provenance;
};

/// Nominal IP + transport header bytes for a protocol.
std::uint32_t nominal_header_bytes(std::uint8_t protocol);

FeatureVector extract_features(const FlowRecord& flow, double activity_timeout_s = 5.0);

/// Maps a column name from this tool or from InSDN/CIC-style CSVs to its
/// feature index. Matching ignores case, whitespace and punctuation.
std::optional<std::size_t> feature_index(std::string_view column_name);

/// Mean over packets (Packet Length Mean) versus total bytes / packets
/// (Average Packet Size). They coincide for flows assembled here.
double packet_length_mean(const FlowRecord& flow);
double average_packet_size(const FlowRecord& flow);

void write_feature_csv(std::span<const FeatureVector> rows, const std::filesystem::path& path,
                       std::span<const std::string> preamble = {});

}  // namespace sdnguard::flowmeter
