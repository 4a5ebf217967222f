#include "flowscope/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include <json.hpp>

#include "flowscope/error.hpp"
#include "flowscope/text_io.hpp"

namespace flowscope::synthgen {
namespace {

namespace bits = capture::tcp_bits;
using Rng = std::mt19937_64;

void put16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v);
}

void put32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

capture::MacAddress mac_for(std::uint32_t addr) {
  return {0x02, 0x00, static_cast<std::uint8_t>(addr >> 24), static_cast<std::uint8_t>(addr >> 16),
          static_cast<std::uint8_t>(addr >> 8), static_cast<std::uint8_t>(addr)};
}

Ipv4Fields fields(std::uint32_t src, std::uint32_t dst, std::uint8_t protocol, std::uint16_t id) {
  Ipv4Fields ip;
  ip.src = src;
  ip.dst = dst;
  ip.protocol = protocol;
  ip.id = id;
  return ip;
}

struct Packet {
  Ipv4Fields ip;
  std::vector<std::uint8_t> payload;
};

struct Flow {
  std::vector<Packet> packets;
  std::size_t next = 0;
};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return items[d(rng)];
}

std::uint16_t rand16(Rng& rng) {
  return static_cast<std::uint16_t>(std::uniform_int_distribution<unsigned>(0, 0xffff)(rng));
}

std::uint32_t rand32(Rng& rng) {
  return std::uniform_int_distribution<std::uint32_t>()(rng);
}

Flow tcp_session(Rng& rng, const TrafficProfile& p) {
  const auto client = pick(rng, p.clients).addr;
  const auto server = pick(rng, p.servers).addr;
  const auto sport = static_cast<std::uint16_t>(
      std::uniform_int_distribution<unsigned>(p.ephemeral_lo, p.ephemeral_hi)(rng));
  const auto dport = pick(rng, p.tcp_server_ports);
  std::uint32_t cseq = rand32(rng);
  std::uint32_t sseq = rand32(rng);

  Flow f;
  auto emit = [&](bool from_client, std::uint8_t flags) {
    Packet pkt;
    pkt.ip.src = from_client ? client : server;
    pkt.ip.dst = from_client ? server : client;
    pkt.ip.protocol = capture::kProtoTcp;
    pkt.ip.id = rand16(rng);
    pkt.ip.dont_fragment = true;
    pkt.payload = from_client ? tcp_segment(sport, dport, cseq, sseq, flags)
                              : tcp_segment(dport, sport, sseq, cseq, flags);
    f.packets.push_back(std::move(pkt));
  };
  emit(true, bits::kSyn);
  ++cseq;
  emit(false, bits::kSyn | bits::kAck);
  ++sseq;
  emit(true, bits::kAck);
  const int acks = std::uniform_int_distribution<int>(1, 10)(rng);
  for (int i = 0; i < acks; ++i) emit(i % 2 == 1, bits::kAck);
  emit(true, bits::kFin | bits::kAck);
  ++cseq;
  emit(false, bits::kAck);
  emit(false, bits::kFin | bits::kAck);
  ++sseq;
  emit(true, bits::kAck);
  return f;
}

Flow udp_exchange(Rng& rng, const TrafficProfile& p) {
  const auto client = pick(rng, p.clients).addr;
  const auto server = pick(rng, p.servers).addr;
  const auto sport = static_cast<std::uint16_t>(
      std::uniform_int_distribution<unsigned>(p.ephemeral_lo, p.ephemeral_hi)(rng));
  const auto dport = pick(rng, p.udp_server_ports);
  Flow f;
  Packet req;
  req.ip = fields(client, server, capture::kProtoUdp, rand16(rng));
  req.payload = udp_datagram(sport, dport, std::uniform_int_distribution<std::size_t>(8, 120)(rng));
  f.packets.push_back(std::move(req));
  if (std::bernoulli_distribution(0.5)(rng)) {
    Packet resp;
    resp.ip = fields(server, client, capture::kProtoUdp, rand16(rng));
    resp.payload =
        udp_datagram(dport, sport, std::uniform_int_distribution<std::size_t>(8, 400)(rng));
    f.packets.push_back(std::move(resp));
  }
  return f;
}

Flow icmp_echo(Rng& rng, const TrafficProfile& p) {
  const auto client = pick(rng, p.clients).addr;
  const auto server = pick(rng, p.servers).addr;
  const auto ident = rand16(rng);
  const auto seq = rand16(rng);
  Flow f;
  Packet req;
  req.ip = fields(client, server, capture::kProtoIcmp, rand16(rng));
  req.payload = icmp_message(8, 0, ident, seq, 56);
  Packet rep;
  rep.ip = fields(server, client, capture::kProtoIcmp, rand16(rng));
  rep.payload = icmp_message(0, 0, ident, seq, 56);
  f.packets.push_back(std::move(req));
  f.packets.push_back(std::move(rep));
  return f;
}

struct Stamped {
  std::int64_t ts_us;
  std::vector<std::uint8_t> frame;
  std::optional<ManifestEntry> truth;
};

std::int64_t to_us(const TrafficProfile& p, double t) {
  return p.epoch_us + static_cast<std::int64_t>(std::llround(t * 1e6));
}

void benign_traffic(const TrafficProfile& p, std::vector<Stamped>& out) {
  Rng rng(p.seed);
  std::exponential_distribution<double> gap(p.rate);
  std::discrete_distribution<int> proto({p.mix.tcp, p.mix.udp, p.mix.icmp});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Arrivals continue an active flow with probability A/(A + 2), which keeps
  // the number of concurrent flows bounded.
  constexpr double kNewFlowWeight = 2.0;
  std::vector<Flow> active;
  double t = gap(rng);
  while (t < p.duration) {
    const double a = static_cast<double>(active.size());
    Flow* flow = nullptr;
    std::size_t idx = 0;
    if (!active.empty() && unit(rng) < a / (a + kNewFlowWeight)) {
      idx = std::uniform_int_distribution<std::size_t>(0, active.size() - 1)(rng);
      flow = &active[idx];
    } else {
      switch (proto(rng)) {
        case 0: active.push_back(tcp_session(rng, p)); break;
        case 1: active.push_back(udp_exchange(rng, p)); break;
        default: active.push_back(icmp_echo(rng, p)); break;
      }
      idx = active.size() - 1;
      flow = &active.back();
    }
    const auto& pkt = flow->packets[flow->next++];
    out.push_back({to_us(p, t), ipv4_frame(pkt.ip, pkt.payload), std::nullopt});
    if (flow->next == flow->packets.size()) active.erase(active.begin() + static_cast<std::ptrdiff_t>(idx));
    t += gap(rng);
  }
}

double num_param(const AttackEpisode& ep, const std::string& key, double fallback) {
  auto it = ep.params.find(key);
  if (it == ep.params.end()) return fallback;
  return text::parse_double(it->second);
}

std::uint32_t addr_param(const AttackEpisode& ep, const std::string& key, std::uint32_t fallback) {
  auto it = ep.params.find(key);
  if (it == ep.params.end()) return fallback;
  auto v = capture::parse_ipv4(it->second);
  if (!v) throw Error(ErrorCode::InvalidArgument, "bad address for " + key + ": " + it->second);
  return *v;
}

constexpr std::uint32_t kAttacker = 0xcb007105;  // 203.0.113.5

void attack_traffic(const TrafficProfile& p, const AttackEpisode& ep, std::size_t episode_no,
                    std::vector<Stamped>& out) {
  Rng rng(p.seed ^ (0x9e3779b97f4a7c15ULL * (episode_no + 1)));
  const std::uint32_t server0 = p.servers.front().addr;
  const std::uint32_t server1 = p.servers.size() > 1 ? p.servers[1].addr : server0;
  const std::uint32_t target = addr_param(ep, "target", server0);
  const std::uint32_t src = addr_param(ep, "src", kAttacker);
  const std::uint32_t client_mask = p.clients.front().netmask;
  const std::uint32_t broadcast =
      addr_param(ep, "broadcast", (p.clients.front().addr & client_mask) | ~client_mask);
  const double span = ep.t_end - ep.t_start;

  auto default_count = [&]() -> double {
    if (ep.kind == "SYN_FLOOD") return std::floor(num_param(ep, "rate", 200.0) * span);
    if (ep.kind == "FIN_SCAN" || ep.kind == "SYNFIN_SCAN" || ep.kind == "ACK_SCAN") return 30;
    if (ep.kind == "PING_OF_DEATH" || ep.kind == "FRAGMENT_OVERLAP" || ep.kind == "BONK") return 3;
    return 5;
  };
  const auto count = static_cast<std::size_t>(num_param(ep, "count", default_count()));
  if (count == 0) return;
  const double step = span / static_cast<double>(count);

  auto push = [&](double t, const Ipv4Fields& ip, const std::vector<std::uint8_t>& payload) {
    out.push_back({to_us(p, t), ipv4_frame(ip, payload), ManifestEntry{to_us(p, t), ep.kind, ip.src, ip.dst}});
  };

  for (std::size_t i = 0; i < count; ++i) {
    const double t = ep.t_start + (static_cast<double>(i) + 0.5) * step;
    const auto id = rand16(rng);
    const auto eph = static_cast<std::uint16_t>(
        std::uniform_int_distribution<unsigned>(p.ephemeral_lo, p.ephemeral_hi)(rng));
    const auto probe_port = static_cast<std::uint16_t>(1 + i % 1024);
    if (ep.kind == "SYN_FLOOD") {
      const auto port = static_cast<std::uint16_t>(num_param(ep, "port", 80));
      // Spoofed sources from 198.18.0.0/15.
      const std::uint32_t spoofed = 0xc6120000u | (rand32(rng) & 0x1ffffu);
      push(t, fields(spoofed, target, capture::kProtoTcp, id),
           tcp_segment(eph, port, rand32(rng), 0, bits::kSyn));
    } else if (ep.kind == "LAND") {
      const auto port = static_cast<std::uint16_t>(num_param(ep, "port", 139));
      push(t, fields(target, target, capture::kProtoTcp, id),
           tcp_segment(port, port, rand32(rng), 0, bits::kSyn));
    } else if (ep.kind == "ACK_SCAN") {
      push(t, fields(src, target, capture::kProtoTcp, id),
           tcp_segment(probe_port, probe_port, rand32(rng), rand32(rng), bits::kAck));
    } else if (ep.kind == "FIN_SCAN") {
      push(t, fields(src, target, capture::kProtoTcp, id),
           tcp_segment(eph, probe_port, rand32(rng), 0, bits::kFin));
    } else if (ep.kind == "SYNFIN_SCAN") {
      push(t, fields(src, target, capture::kProtoTcp, id),
           tcp_segment(eph, probe_port, rand32(rng), 0, bits::kSyn | bits::kFin));
    } else if (ep.kind == "OOB_BUG") {
      push(t, fields(src, target, capture::kProtoTcp, id),
           tcp_segment(eph, 139, rand32(rng), rand32(rng), bits::kUrg | bits::kAck | bits::kPsh, 3));
    } else if (ep.kind == "PING_OF_DEATH") {
      // Final fragment of an oversized echo request: 8189 * 8 + 1000 > 65535.
      Ipv4Fields ip = fields(src, target, capture::kProtoIcmp, id);
      ip.fragment_offset = 8189;
      push(t, ip, std::vector<std::uint8_t>(1000, 0));
    } else if (ep.kind == "SMURF") {
      push(t, fields(target, broadcast, capture::kProtoIcmp, id), icmp_message(8, 0, id, 1, 56));
    } else if (ep.kind == "FRAGGLE") {
      const std::uint16_t port = i % 2 == 0 ? 7 : 19;
      push(t, fields(target, broadcast, capture::kProtoUdp, id), udp_datagram(eph, port, 32));
    } else if (ep.kind == "PINGPONG") {
      push(t, fields(target, server1, capture::kProtoUdp, id), udp_datagram(19, 7, 32));
    } else if (ep.kind == "UNALIGNED_TS") {
      Ipv4Fields ip = fields(src, target, capture::kProtoUdp, id);
      // Timestamp option of length 10 (not 4 + 8k), padded with end-of-list.
      ip.options = {68, 10, 5, 0, 0, 0, 0, 0, 0, 0, 0, 0};
      push(t, ip, udp_datagram(eph, 53, 16));
    } else if (ep.kind == "FRAGMENT_OVERLAP" || ep.kind == "BONK") {
      const bool udp = ep.kind == "BONK";
      Ipv4Fields first = fields(src, target, udp ? capture::kProtoUdp : capture::kProtoTcp, id);
      first.more_fragments = true;
      std::vector<std::uint8_t> head =
          udp ? udp_datagram(eph, 53, 16)
              : tcp_segment(eph, 80, rand32(rng), rand32(rng), bits::kAck | bits::kPsh);
      head.resize(24, 0);
      Ipv4Fields second = first;
      second.more_fragments = false;
      second.fragment_offset = 1;  // bytes [8, 32) overlap [0, 24)
      push(t, first, head);
      push(t + std::min(0.001, step / 4), second, std::vector<std::uint8_t>(24, 0));
    } else {
      throw Error(ErrorCode::UnknownKind, "no generator for attack kind '" + ep.kind + "'");
    }
  }
}

}  // namespace

TrafficProfile TrafficProfile::with_defaults(std::uint64_t seed, double duration, double rate) {
  TrafficProfile p;
  p.seed = seed;
  p.duration = duration;
  p.rate = rate;
  for (std::uint32_t h = 10; h < 50; ++h) p.clients.push_back({0x0a000000u | h, 0xffffff00});
  for (std::uint32_t h = 10; h < 18; ++h) p.servers.push_back({0x0a000100u | h, 0xffffff00});
  return p;
}

void TrafficProfile::validate() const {
  if (!(rate > 0)) throw Error(ErrorCode::InvalidArgument, "rate must be > 0");
  if (!(duration > 0)) throw Error(ErrorCode::InvalidArgument, "duration must be > 0");
  if (mix.tcp < 0 || mix.udp < 0 || mix.icmp < 0 || !(mix.tcp + mix.udp + mix.icmp > 0)) {
    throw Error(ErrorCode::InvalidArgument, "protocol weights must be non-negative with positive sum");
  }
  if (clients.empty() || servers.empty()) {
    throw Error(ErrorCode::InvalidArgument, "address pools must be non-empty");
  }
  if (tcp_server_ports.empty() || udp_server_ports.empty() || ephemeral_lo > ephemeral_hi) {
    throw Error(ErrorCode::InvalidArgument, "invalid port model");
  }
}

std::vector<std::string> supported_kinds() {
  return {"SYN_FLOOD",  "LAND",          "ACK_SCAN", "FIN_SCAN", "SYNFIN_SCAN",
          "OOB_BUG",    "PING_OF_DEATH", "SMURF",    "FRAGGLE",  "PINGPONG",
          "UNALIGNED_TS", "FRAGMENT_OVERLAP", "BONK"};
}

AttackEpisode parse_episode(std::string_view spec) {
  const auto parts = text::split(spec, ':');
  if (parts.size() < 3 || parts.size() > 4) {
    throw Error(ErrorCode::InvalidArgument,
                "episode must be kind:start:end[:params], got '" + std::string(spec) + "'");
  }
  AttackEpisode ep;
  ep.kind = std::string(parts[0]);
  ep.t_start = text::parse_double(parts[1]);
  ep.t_end = text::parse_double(parts[2]);
  if (parts.size() == 4 && !parts[3].empty()) {
    for (auto kv : text::split(parts[3], ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorCode::InvalidArgument, "episode parameter must be key=value: '" +
                                                    std::string(kv) + "'");
      }
      ep.params[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
    }
  }
  return ep;
}

SyntheticCapture synthesize(const TrafficProfile& profile, std::span<const AttackEpisode> episodes) {
  profile.validate();
  const auto kinds = supported_kinds();
  for (const auto& ep : episodes) {
    if (std::find(kinds.begin(), kinds.end(), ep.kind) == kinds.end()) {
      throw Error(ErrorCode::UnknownKind, "no runtime detector for attack kind '" + ep.kind + "'");
    }
    if (!(ep.t_start >= 0 && ep.t_start < ep.t_end && ep.t_end <= profile.duration)) {
      throw Error(ErrorCode::InvalidArgument,
                  "episode " + ep.kind + " needs 0 <= start < end <= duration");
    }
  }

  std::vector<Stamped> stamped;
  benign_traffic(profile, stamped);
  for (std::size_t i = 0; i < episodes.size(); ++i) attack_traffic(profile, episodes[i], i, stamped);
  std::stable_sort(stamped.begin(), stamped.end(),
                   [](const Stamped& a, const Stamped& b) { return a.ts_us < b.ts_us; });

  SyntheticCapture out;
  out.header.snaplen = 65535;
  for (auto& s : stamped) {
    if (s.truth) out.manifest.push_back(*s.truth);
    out.records.push_back(make_record(s.ts_us, std::move(s.frame)));
  }
  return out;
}

std::vector<ManifestEntry> generate(const TrafficProfile& profile,
                                    std::span<const AttackEpisode> episodes,
                                    const std::filesystem::path& out) {
  auto cap = synthesize(profile, episodes);
  capture::write_pcap_file(out, cap.header, cap.records);
  return std::move(cap.manifest);
}

void write_manifest_json(std::ostream& out, std::span<const ManifestEntry> manifest) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : manifest) {
    nlohmann::ordered_json j;
    j["ts_us"] = m.ts_us;
    j["kind"] = m.kind;
    j["src"] = capture::format_ipv4(m.src);
    j["dst"] = capture::format_ipv4(m.dst);
    arr.push_back(j);
  }
  out << arr.dump(1) << '\n';
}

std::vector<std::uint8_t> tcp_segment(std::uint16_t sport, std::uint16_t dport, std::uint32_t seq,
                                      std::uint32_t ack, std::uint8_t flags,
                                      std::uint16_t urgent_ptr) {
  std::vector<std::uint8_t> b(20, 0);
  put16(b, 0, sport);
  put16(b, 2, dport);
  put32(b, 4, seq);
  put32(b, 8, ack);
  b[12] = 5 << 4;
  b[13] = flags & 0x3f;
  put16(b, 14, 65535);
  put16(b, 18, urgent_ptr);
  return b;
}

std::vector<std::uint8_t> udp_datagram(std::uint16_t sport, std::uint16_t dport,
                                       std::size_t payload_len) {
  std::vector<std::uint8_t> b(8 + payload_len, 0);
  put16(b, 0, sport);
  put16(b, 2, dport);
  put16(b, 4, static_cast<std::uint16_t>(b.size()));
  return b;
}

std::vector<std::uint8_t> icmp_message(std::uint8_t type, std::uint8_t code, std::uint16_t ident,
                                       std::uint16_t sequence, std::size_t payload_len) {
  std::vector<std::uint8_t> b(8 + payload_len, 0);
  b[0] = type;
  b[1] = code;
  put16(b, 4, ident);
  put16(b, 6, sequence);
  return b;
}

std::vector<std::uint8_t> ipv4_frame(const Ipv4Fields& ip, std::span<const std::uint8_t> ip_payload) {
  auto options = ip.options;
  options.resize((options.size() + 3) / 4 * 4, 0);
  if (options.size() > 40) throw Error(ErrorCode::InvalidArgument, "IPv4 options exceed 40 bytes");
  const std::size_t ihl = 20 + options.size();
  const std::size_t total = ihl + ip_payload.size();
  if (total > 0xffff) throw Error(ErrorCode::InvalidArgument, "IPv4 datagram too large");

  std::vector<std::uint8_t> f(14 + total, 0);
  const auto dst_mac = mac_for(ip.dst);
  const auto src_mac = mac_for(ip.src);
  std::copy(dst_mac.begin(), dst_mac.end(), f.begin());
  std::copy(src_mac.begin(), src_mac.end(), f.begin() + 6);
  put16(f, 12, capture::kEtherTypeIpv4);
  f[14] = static_cast<std::uint8_t>(0x40 | (ihl / 4));
  put16(f, 16, static_cast<std::uint16_t>(total));
  put16(f, 18, ip.id);
  std::uint16_t frag = ip.fragment_offset & 0x1fff;
  if (ip.dont_fragment) frag |= 0x4000;
  if (ip.more_fragments) frag |= 0x2000;
  put16(f, 20, frag);
  f[22] = ip.ttl;
  f[23] = ip.protocol;
  put32(f, 26, ip.src);
  put32(f, 30, ip.dst);
  std::copy(options.begin(), options.end(), f.begin() + 34);
  std::copy(ip_payload.begin(), ip_payload.end(), f.begin() + 14 + static_cast<std::ptrdiff_t>(ihl));
  return f;
}

capture::PacketRecord make_record(std::int64_t ts_us, std::vector<std::uint8_t> frame) {
  capture::PacketRecord rec;
  rec.timestamp_us = ts_us;
  rec.captured_len = static_cast<std::uint32_t>(frame.size());
  rec.original_len = rec.captured_len;
  rec.payload = std::move(frame);
  return rec;
}

}  // namespace flowscope::synthgen
