#include "flowscope/capture.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flowscope/error.hpp"

namespace flowscope::capture {
namespace {

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t off) {
  return std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) |
         (std::uint32_t{b[off + 2]} << 16) | (std::uint32_t{b[off + 3]} << 24);
}

void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void require(std::span<const std::uint8_t> frame, std::size_t end, const char* what) {
  if (frame.size() < end) {
    throw Error(ErrorCode::Truncated, std::string("captured bytes end inside ") + what +
                                          " header (need " + std::to_string(end) + ", have " +
                                          std::to_string(frame.size()) + ")");
  }
}

}  // namespace

PcapReader::PcapReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  if (bytes_.size() < 4) {
    throw Error(ErrorCode::Truncated, "stream shorter than the pcap magic");
  }
  const std::uint32_t magic = le32(bytes_, 0);
  if (magic != kMagicMicros && magic != kMagicSwapped) {
    std::ostringstream msg;
    msg << "unrecognized pcap magic 0x" << std::hex << magic;
    throw Error(ErrorCode::BadMagic, msg.str());
  }
  header_.magic = magic;
  if (bytes_.size() < kGlobalHeaderSize) {
    throw Error(ErrorCode::Truncated, "stream ends inside the pcap global header");
  }
  header_.version_major = read_u16(4);
  header_.version_minor = read_u16(6);
  header_.thiszone = static_cast<std::int32_t>(read_u32(8));
  header_.sigfigs = read_u32(12);
  header_.snaplen = read_u32(16);
  header_.linktype = read_u32(20);
  if (header_.linktype != kLinkTypeEthernet) {
    throw Error(ErrorCode::UnsupportedLinkType,
                "linktype " + std::to_string(header_.linktype) + " (only Ethernet is supported)");
  }
}

std::uint32_t PcapReader::read_u32(std::size_t offset) const {
  return header_.swapped() ? be32(bytes_, offset) : le32(bytes_, offset);
}

std::uint16_t PcapReader::read_u16(std::size_t offset) const {
  const auto lo = bytes_[offset];
  const auto hi = bytes_[offset + 1];
  return header_.swapped() ? static_cast<std::uint16_t>((lo << 8) | hi)
                           : static_cast<std::uint16_t>((hi << 8) | lo);
}

std::optional<PacketRecord> PcapReader::next() {
  if (offset_ == bytes_.size()) return std::nullopt;
  if (bytes_.size() - offset_ < kRecordHeaderSize) {
    throw Error(ErrorCode::Truncated, "stream ends inside a record header at offset " +
                                          std::to_string(offset_));
  }
  const std::uint32_t ts_sec = read_u32(offset_);
  const std::uint32_t ts_usec = read_u32(offset_ + 4);
  const std::uint32_t incl_len = read_u32(offset_ + 8);
  const std::uint32_t orig_len = read_u32(offset_ + 12);
  if (incl_len > orig_len || (header_.snaplen != 0 && incl_len > header_.snaplen)) {
    throw Error(ErrorCode::MalformedHeader,
                "record at offset " + std::to_string(offset_) + " has incl_len " +
                    std::to_string(incl_len) + " exceeding orig_len or snaplen");
  }
  const std::size_t body = offset_ + kRecordHeaderSize;
  if (bytes_.size() - body < incl_len) {
    throw Error(ErrorCode::Truncated, "stream ends inside the record body at offset " +
                                          std::to_string(body));
  }
  PacketRecord rec;
  rec.timestamp_us = static_cast<std::int64_t>(ts_sec) * 1'000'000 + ts_usec;
  rec.captured_len = incl_len;
  rec.original_len = orig_len;
  rec.payload.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(body),
                     bytes_.begin() + static_cast<std::ptrdiff_t>(body + incl_len));
  offset_ = body + incl_len;
  return rec;
}

Capture read_pcap(std::span<const std::uint8_t> bytes) {
  PcapReader reader(bytes);
  Capture cap;
  cap.header = reader.header();
  while (auto rec = reader.next()) cap.records.push_back(std::move(*rec));
  return cap;
}

Capture read_pcap(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return read_pcap(bytes);
}

Capture read_pcap_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_pcap(in);
}

std::vector<std::uint8_t> encode_pcap(const PcapFileHeader& header,
                                      std::span<const PacketRecord> records) {
  std::vector<std::uint8_t> out;
  put_le32(out, kMagicMicros);
  put_le16(out, header.version_major);
  put_le16(out, header.version_minor);
  put_le32(out, static_cast<std::uint32_t>(header.thiszone));
  put_le32(out, header.sigfigs);
  put_le32(out, header.snaplen);
  put_le32(out, header.linktype);
  for (const auto& rec : records) {
    if (rec.timestamp_us < 0) {
      throw Error(ErrorCode::InvalidArgument, "negative record timestamp");
    }
    if (rec.payload.size() != rec.captured_len || rec.captured_len > rec.original_len) {
      throw Error(ErrorCode::InvalidArgument, "record lengths inconsistent with payload");
    }
    put_le32(out, static_cast<std::uint32_t>(rec.timestamp_us / 1'000'000));
    put_le32(out, static_cast<std::uint32_t>(rec.timestamp_us % 1'000'000));
    put_le32(out, rec.captured_len);
    put_le32(out, rec.original_len);
    out.insert(out.end(), rec.payload.begin(), rec.payload.end());
  }
  return out;
}

void write_pcap_file(const std::filesystem::path& path, const PcapFileHeader& header,
                     std::span<const PacketRecord> records) {
  const auto bytes = encode_pcap(header, records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::WriteFailure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::WriteFailure, "short write to " + path.string());
}

std::uint8_t TcpFlags::bits() const noexcept {
  std::uint8_t b = 0;
  if (fin) b |= tcp_bits::kFin;
  if (syn) b |= tcp_bits::kSyn;
  if (rst) b |= tcp_bits::kRst;
  if (psh) b |= tcp_bits::kPsh;
  if (ack) b |= tcp_bits::kAck;
  if (urg) b |= tcp_bits::kUrg;
  return b;
}

TcpFlags TcpFlags::from_bits(std::uint8_t bits) noexcept {
  TcpFlags f;
  f.fin = bits & tcp_bits::kFin;
  f.syn = bits & tcp_bits::kSyn;
  f.rst = bits & tcp_bits::kRst;
  f.psh = bits & tcp_bits::kPsh;
  f.ack = bits & tcp_bits::kAck;
  f.urg = bits & tcp_bits::kUrg;
  return f;
}

ParsedHeaders parse_headers(std::span<const std::uint8_t> frame) {
  ParsedHeaders out;
  require(frame, 14, "Ethernet");
  std::copy_n(frame.begin(), 6, out.eth_dst.begin());
  std::copy_n(frame.begin() + 6, 6, out.eth_src.begin());
  std::size_t off = 12;
  out.ethertype = be16(frame, off);
  off += 2;
  if (out.ethertype == kEtherTypeVlan) {
    require(frame, off + 4, "VLAN");
    out.vlan_id = static_cast<std::uint16_t>(be16(frame, off) & 0x0fff);
    out.ethertype = be16(frame, off + 2);
    off += 4;
  }
  if (out.ethertype != kEtherTypeIpv4) return out;

  require(frame, off + 20, "IPv4");
  Ipv4Header ip;
  ip.version = frame[off] >> 4;
  ip.header_len_bytes = static_cast<std::uint8_t>((frame[off] & 0x0f) * 4);
  if (ip.version != 4) {
    throw Error(ErrorCode::MalformedHeader, "IP version " + std::to_string(ip.version));
  }
  if (ip.header_len_bytes < 20) {
    throw Error(ErrorCode::MalformedHeader,
                "IPv4 header length " + std::to_string(ip.header_len_bytes) + " < 20");
  }
  ip.tos = frame[off + 1];
  ip.total_length = be16(frame, off + 2);
  if (ip.total_length < ip.header_len_bytes) {
    throw Error(ErrorCode::MalformedHeader, "IPv4 total length " +
                                                std::to_string(ip.total_length) +
                                                " shorter than its header");
  }
  ip.identification = be16(frame, off + 4);
  const std::uint16_t frag = be16(frame, off + 6);
  ip.dont_fragment = frag & 0x4000;
  ip.more_fragments = frag & 0x2000;
  ip.fragment_offset = frag & 0x1fff;
  ip.ttl = frame[off + 8];
  ip.protocol = frame[off + 9];
  ip.checksum = be16(frame, off + 10);
  ip.src = be32(frame, off + 12);
  ip.dst = be32(frame, off + 16);
  require(frame, off + ip.header_len_bytes, "IPv4 options");
  ip.options.assign(frame.begin() + static_cast<std::ptrdiff_t>(off + 20),
                    frame.begin() + static_cast<std::ptrdiff_t>(off + ip.header_len_bytes));
  off += ip.header_len_bytes;
  const std::uint8_t protocol = ip.protocol;
  const bool first_fragment = ip.fragment_offset == 0;
  out.ip = std::move(ip);
  if (!first_fragment) return out;

  switch (protocol) {
    case kProtoTcp: {
      require(frame, off + 20, "TCP");
      TcpHeader tcp;
      tcp.src_port = be16(frame, off);
      tcp.dst_port = be16(frame, off + 2);
      tcp.seq = be32(frame, off + 4);
      tcp.ack_num = be32(frame, off + 8);
      tcp.data_offset_bytes = static_cast<std::uint8_t>((frame[off + 12] >> 4) * 4);
      tcp.flags = TcpFlags::from_bits(frame[off + 13] & 0x3f);
      tcp.window = be16(frame, off + 14);
      tcp.urgent_ptr = be16(frame, off + 18);
      out.tcp = tcp;
      break;
    }
    case kProtoUdp: {
      require(frame, off + 8, "UDP");
      out.udp = UdpHeader{be16(frame, off), be16(frame, off + 2), be16(frame, off + 4)};
      break;
    }
    case kProtoIcmp: {
      require(frame, off + 2, "ICMP");
      out.icmp = IcmpHeader{frame[off], frame[off + 1]};
      break;
    }
    default:
      break;
  }
  return out;
}

ParsedHeaders parse_headers(const PacketRecord& record) { return parse_headers(record.payload); }

std::string format_ipv4(std::uint32_t addr) {
  return std::to_string(addr >> 24) + '.' + std::to_string((addr >> 16) & 0xff) + '.' +
         std::to_string((addr >> 8) & 0xff) + '.' + std::to_string(addr & 0xff);
}

std::optional<std::uint32_t> parse_ipv4(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    if (octet > 0) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || next == p || part > 255) return std::nullopt;
    value = (value << 8) | part;
    p = next;
  }
  if (p != end) return std::nullopt;
  return value;
}

}  // namespace flowscope::capture
