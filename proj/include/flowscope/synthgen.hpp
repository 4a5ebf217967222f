#pragma once

// Deterministic synthetic captures: Poisson background traffic with attack
// episodes spliced in, plus a manifest of every attack packet.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowscope/capture.hpp"

namespace flowscope::synthgen {

struct HostAddress {
  std::uint32_t addr = 0;
  std::uint32_t netmask = 0xffffff00;
};

struct ProtocolMix {
  double tcp = 0.6;
  double udp = 0.3;
  double icmp = 0.1;
};

struct TrafficProfile {
  std::uint64_t seed = 42;
  double duration = 10.0;  // seconds
  double rate = 50.0;      // mean packets per second
  ProtocolMix mix;
  std::vector<HostAddress> clients;
  std::vector<HostAddress> servers;
  std::vector<std::uint16_t> tcp_server_ports{22, 25, 80, 443, 8080};
  std::vector<std::uint16_t> udp_server_ports{53, 123, 161};
  std::uint16_t ephemeral_lo = 32768;
  std::uint16_t ephemeral_hi = 60999;
  std::int64_t epoch_us = 1'600'000'000'000'000;  // timestamp of t = 0

  /// Profile with the default address pools: 40 clients in 10.0.0.0/24 and
  /// 8 servers in 10.0.1.0/24.
  static TrafficProfile with_defaults(std::uint64_t seed = 42, double duration = 10.0,
                                      double rate = 50.0);
  void validate() const;
};

struct AttackEpisode {
  std::string kind;  // catalog rule name with a runtime detector
  double t_start = 0;
  double t_end = 0;
  std::map<std::string, std::string> params;
};

/// Parses `kind:start:end[:k=v,k=v...]`.
AttackEpisode parse_episode(std::string_view text);

/// Attack kinds the generator can inject.
std::vector<std::string> supported_kinds();

struct ManifestEntry {
  std::int64_t ts_us = 0;
  std::string kind;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
};

struct SyntheticCapture {
  capture::PcapFileHeader header;
  std::vector<capture::PacketRecord> records;  // timestamp ordered
  std::vector<ManifestEntry> manifest;
};

/// Pure function of (profile, episodes). Throws Error{UnknownKind} or
/// Error{InvalidArgument} for invalid episodes.
SyntheticCapture synthesize(const TrafficProfile& profile, std::span<const AttackEpisode> episodes);

/// Writes the capture to `out` and returns the manifest. Throws
/// Error{WriteFailure} when the file cannot be written.
std::vector<ManifestEntry> generate(const TrafficProfile& profile,
                                    std::span<const AttackEpisode> episodes,
                                    const std::filesystem::path& out);

/// JSON list of {ts_us, kind, src, dst}.
void write_manifest_json(std::ostream& out, std::span<const ManifestEntry> manifest);

// Frame construction, also used by tests. Checksums are written as zero.
struct Ipv4Fields {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint8_t protocol = capture::kProtoTcp;
  std::uint16_t id = 0;
  bool dont_fragment = false;
  bool more_fragments = false;
  std::uint16_t fragment_offset = 0;  // 8-byte units
  std::uint8_t ttl = 64;
  std::vector<std::uint8_t> options;  // padded to a multiple of 4
};

std::vector<std::uint8_t> tcp_segment(std::uint16_t sport, std::uint16_t dport, std::uint32_t seq,
                                      std::uint32_t ack, std::uint8_t flags,
                                      std::uint16_t urgent_ptr = 0);
std::vector<std::uint8_t> udp_datagram(std::uint16_t sport, std::uint16_t dport,
                                       std::size_t payload_len);
std::vector<std::uint8_t> icmp_message(std::uint8_t type, std::uint8_t code, std::uint16_t ident,
                                       std::uint16_t sequence, std::size_t payload_len);
/// Ethernet II + IPv4 frame carrying `ip_payload`.
std::vector<std::uint8_t> ipv4_frame(const Ipv4Fields& ip, std::span<const std::uint8_t> ip_payload);

capture::PacketRecord make_record(std::int64_t ts_us, std::vector<std::uint8_t> frame);

}  // namespace flowscope::synthgen
