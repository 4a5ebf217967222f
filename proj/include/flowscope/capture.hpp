#pragma once

// Classic pcap reading/writing and Ethernet/IPv4/TCP/UDP/ICMP header decoding.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowscope::capture {

inline constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kRecordHeaderSize = 16;

inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherTypeArp = 0x0806;
inline constexpr std::uint16_t kEtherTypeVlan = 0x8100;
inline constexpr std::uint16_t kEtherTypeIpv6 = 0x86dd;

inline constexpr std::uint8_t kProtoIcmp = 1;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

struct PcapFileHeader {
  std::uint32_t magic = kMagicMicros;
  std::uint16_t version_major = 2;
  std::uint16_t version_minor = 4;
  std::int32_t thiszone = 0;
  std::uint32_t sigfigs = 0;
  std::uint32_t snaplen = 65535;
  std::uint32_t linktype = kLinkTypeEthernet;

  /// True when the file was written with the opposite byte order to the
  /// little-endian layout this library writes.
  bool swapped() const noexcept { return magic == kMagicSwapped; }
};

struct PacketRecord {
  std::int64_t timestamp_us = 0;
  std::uint32_t captured_len = 0;
  std::uint32_t original_len = 0;
  std::vector<std::uint8_t> payload;
};

struct Capture {
  PcapFileHeader header;
  std::vector<PacketRecord> records;
};

/// Single-consumer record iterator over an in-memory pcap image.
/// The global header is validated on construction.
class PcapReader {
 public:
  explicit PcapReader(std::span<const std::uint8_t> bytes);

  const PcapFileHeader& header() const noexcept { return header_; }

  /// Next record in file order, or nullopt at a clean end of stream.
  std::optional<PacketRecord> next();

 private:
  std::uint32_t read_u32(std::size_t offset) const;
  std::uint16_t read_u16(std::size_t offset) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = kGlobalHeaderSize;
  PcapFileHeader header_;
};

Capture read_pcap(std::span<const std::uint8_t> bytes);
Capture read_pcap(std::istream& in);
Capture read_pcap_file(const std::filesystem::path& path);

/// Serializes records as a little-endian classic pcap image. The header's
/// magic is forced to kMagicMicros.
std::vector<std::uint8_t> encode_pcap(const PcapFileHeader& header,
                                      std::span<const PacketRecord> records);
void write_pcap_file(const std::filesystem::path& path, const PcapFileHeader& header,
                     std::span<const PacketRecord> records);

// ---------------------------------------------------------------------------
// Decoded headers
// ---------------------------------------------------------------------------

using MacAddress = std::array<std::uint8_t, 6>;

struct Ipv4Header {
  std::uint8_t version = 4;
  std::uint8_t header_len_bytes = 20;
  std::uint8_t tos = 0;
  std::uint16_t total_length = 0;
  std::uint16_t identification = 0;
  bool dont_fragment = false;
  bool more_fragments = false;
  std::uint16_t fragment_offset = 0;  // 8-byte units
  std::uint8_t ttl = 0;
  std::uint8_t protocol = 0;
  std::uint16_t checksum = 0;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::vector<std::uint8_t> options;

  /// Declared datagram payload length (total_length minus header length).
  std::uint32_t payload_length() const noexcept {
    return total_length > header_len_bytes ? total_length - header_len_bytes : 0;
  }
  bool is_fragment() const noexcept { return more_fragments || fragment_offset != 0; }
  std::uint32_t fragment_byte_offset() const noexcept {
    return static_cast<std::uint32_t>(fragment_offset) * 8;
  }
};

struct TcpFlags {
  bool fin = false;
  bool syn = false;
  bool rst = false;
  bool psh = false;
  bool ack = false;
  bool urg = false;

  /// Low six bits of the flags byte: URG ACK PSH RST SYN FIN.
  std::uint8_t bits() const noexcept;
  static TcpFlags from_bits(std::uint8_t bits) noexcept;
};

namespace tcp_bits {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
}  // namespace tcp_bits

struct TcpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack_num = 0;
  std::uint8_t data_offset_bytes = 20;
  TcpFlags flags;
  std::uint16_t window = 0;
  std::uint16_t urgent_ptr = 0;
};

struct UdpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint16_t length = 0;
};

struct IcmpHeader {
  std::uint8_t type = 0;
  std::uint8_t code = 0;
};

struct ParsedHeaders {
  MacAddress eth_dst{};
  MacAddress eth_src{};
  std::uint16_t ethertype = 0;  // after skipping at most one VLAN tag
  std::optional<std::uint16_t> vlan_id;
  std::optional<Ipv4Header> ip;
  std::optional<TcpHeader> tcp;
  std::optional<UdpHeader> udp;
  std::optional<IcmpHeader> icmp;
};

/// Decodes link, network and transport headers. Transport headers are only
/// decoded for the first fragment of a datagram (offset 0); later fragments
/// carry no transport header. Throws Error{Truncated} or Error{MalformedHeader}.
ParsedHeaders parse_headers(std::span<const std::uint8_t> frame);
ParsedHeaders parse_headers(const PacketRecord& record);

std::string format_ipv4(std::uint32_t addr);
/// Parses dotted-quad notation; nullopt on malformed input.
std::optional<std::uint32_t> parse_ipv4(std::string_view text);

}  // namespace flowscope::capture
