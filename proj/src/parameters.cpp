#include "flowscope/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <utility>

#include "flowscope/error.hpp"
#include "flowscope/text_io.hpp"

namespace flowscope::parameters {
namespace {

constexpr std::array<std::pair<ParameterId, std::string_view>, kAllParameters.size()> kNames = {{
    {ParameterId::IpProtocol, "IP_PROTOCOL"},
    {ParameterId::IpSrc, "IP_SRC"},
    {ParameterId::IpDst, "IP_DST"},
    {ParameterId::IpLength, "IP_LENGTH"},
    {ParameterId::IpMfFlag, "IP_MF_FLAG"},
    {ParameterId::IpDfFlag, "IP_DF_FLAG"},
    {ParameterId::IpOptionsLen, "IP_OPTIONS_LEN"},
    {ParameterId::IpFragOffset, "IP_FRAG_OFFSET"},
    {ParameterId::IpId, "IP_ID"},
    {ParameterId::TcpSport, "TCP_SPORT"},
    {ParameterId::TcpDport, "TCP_DPORT"},
    {ParameterId::TcpUrg, "TCP_URG"},
    {ParameterId::TcpRst, "TCP_RST"},
    {ParameterId::TcpAck, "TCP_ACK"},
    {ParameterId::TcpSyn, "TCP_SYN"},
    {ParameterId::TcpFin, "TCP_FIN"},
    {ParameterId::TcpSeq, "TCP_SEQ"},
    {ParameterId::UdpSport, "UDP_SPORT"},
    {ParameterId::UdpDport, "UDP_DPORT"},
    {ParameterId::IcmpType, "ICMP_TYPE"},
    {ParameterId::IcmpCode, "ICMP_CODE"},
}};

double flag(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

std::string_view parameter_name(ParameterId id) noexcept {
  for (const auto& [pid, name] : kNames) {
    if (pid == id) return name;
  }
  return "?";
}

std::optional<ParameterId> parse_parameter(std::string_view name) noexcept {
  for (const auto& [pid, n] : kNames) {
    if (n == name) return pid;
  }
  return std::nullopt;
}

std::optional<double> extract(const capture::ParsedHeaders& h, ParameterId id) noexcept {
  const auto& ip = h.ip;
  const auto& tcp = h.tcp;
  switch (id) {
    case ParameterId::IpProtocol: return ip ? std::optional<double>(ip->protocol) : std::nullopt;
    case ParameterId::IpSrc: return ip ? std::optional<double>(ip->src) : std::nullopt;
    case ParameterId::IpDst: return ip ? std::optional<double>(ip->dst) : std::nullopt;
    case ParameterId::IpLength: return ip ? std::optional<double>(ip->total_length) : std::nullopt;
    case ParameterId::IpMfFlag: return ip ? std::optional<double>(flag(ip->more_fragments)) : std::nullopt;
    case ParameterId::IpDfFlag: return ip ? std::optional<double>(flag(ip->dont_fragment)) : std::nullopt;
    case ParameterId::IpOptionsLen:
      return ip ? std::optional<double>(static_cast<double>(ip->options.size())) : std::nullopt;
    case ParameterId::IpFragOffset: return ip ? std::optional<double>(ip->fragment_offset) : std::nullopt;
    case ParameterId::IpId: return ip ? std::optional<double>(ip->identification) : std::nullopt;
    case ParameterId::TcpSport: return tcp ? std::optional<double>(tcp->src_port) : std::nullopt;
    case ParameterId::TcpDport: return tcp ? std::optional<double>(tcp->dst_port) : std::nullopt;
    case ParameterId::TcpUrg: return tcp ? std::optional<double>(flag(tcp->flags.urg)) : std::nullopt;
    case ParameterId::TcpRst: return tcp ? std::optional<double>(flag(tcp->flags.rst)) : std::nullopt;
    case ParameterId::TcpAck: return tcp ? std::optional<double>(flag(tcp->flags.ack)) : std::nullopt;
    case ParameterId::TcpSyn: return tcp ? std::optional<double>(flag(tcp->flags.syn)) : std::nullopt;
    case ParameterId::TcpFin: return tcp ? std::optional<double>(flag(tcp->flags.fin)) : std::nullopt;
    case ParameterId::TcpSeq: return tcp ? std::optional<double>(tcp->seq) : std::nullopt;
    case ParameterId::UdpSport: return h.udp ? std::optional<double>(h.udp->src_port) : std::nullopt;
    case ParameterId::UdpDport: return h.udp ? std::optional<double>(h.udp->dst_port) : std::nullopt;
    case ParameterId::IcmpType: return h.icmp ? std::optional<double>(h.icmp->type) : std::nullopt;
    case ParameterId::IcmpCode: return h.icmp ? std::optional<double>(h.icmp->code) : std::nullopt;
  }
  return std::nullopt;
}

std::string_view aggregator_name(Aggregator agg) noexcept {
  switch (agg) {
    case Aggregator::Last: return "last";
    case Aggregator::Mean: return "mean";
    case Aggregator::Count: return "count";
    case Aggregator::Sum: return "sum";
  }
  return "?";
}

std::optional<Aggregator> parse_aggregator(std::string_view name) noexcept {
  for (auto agg : {Aggregator::Last, Aggregator::Mean, Aggregator::Count, Aggregator::Sum}) {
    if (aggregator_name(agg) == name) return agg;
  }
  return std::nullopt;
}

std::int64_t tau_to_us(double tau) {
  if (!std::isfinite(tau) || tau <= 0) {
    throw Error(ErrorCode::InvalidTau, "tau must be a positive number of seconds, got " +
                                           text::format_double(tau));
  }
  const double us = std::round(tau * 1e6);
  if (us < 1 || us > 9e15) {
    throw Error(ErrorCode::InvalidTau, "tau " + text::format_double(tau) +
                                           " s is outside [1 us, 9e9 s]");
  }
  return static_cast<std::int64_t>(us);
}

ParameterSeries sample(std::span<const TimedHeaders> packets, ParameterId parameter, double tau,
                       const SampleOptions& options) {
  ParameterSeries series;
  series.parameter = parameter;
  series.tau = tau;
  series.tau_us = tau_to_us(tau);
  series.aggregator = options.aggregator;
  series.fill = options.fill;
  if (packets.empty()) {
    series.t0_us = options.t0_us.value_or(0);
    return series;
  }

  struct Point {
    std::int64_t ts;
    std::optional<double> value;
  };
  std::vector<Point> points;
  points.reserve(packets.size());
  for (const auto& p : packets) points.push_back({p.timestamp_us, extract(p.headers, parameter)});
  // Ties on timestamp are ordered by value so the result is a function of
  // the packet multiset, not the input order.
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    return a.value < b.value;
  });

  series.t0_us = options.t0_us.value_or(points.front().ts);
  const std::int64_t t_last = points.back().ts;
  if (t_last < series.t0_us) return series;
  const auto bins = static_cast<std::size_t>((t_last - series.t0_us) / series.tau_us) + 1;

  std::vector<double> acc(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const auto& pt : points) {
    if (pt.ts < series.t0_us || !pt.value) continue;
    const auto bin = static_cast<std::size_t>((pt.ts - series.t0_us) / series.tau_us);
    switch (options.aggregator) {
      case Aggregator::Last: acc[bin] = *pt.value; break;
      case Aggregator::Mean:
      case Aggregator::Sum: acc[bin] += *pt.value; break;
      case Aggregator::Count: break;
    }
    ++count[bin];
  }

  series.values.resize(bins);
  for (std::size_t n = 0; n < bins; ++n) {
    if (count[n] == 0) {
      series.values[n] = options.fill;
      continue;
    }
    switch (options.aggregator) {
      case Aggregator::Last:
      case Aggregator::Sum: series.values[n] = acc[n]; break;
      case Aggregator::Mean: series.values[n] = acc[n] / static_cast<double>(count[n]); break;
      case Aggregator::Count: series.values[n] = static_cast<double>(count[n]); break;
    }
  }
  return series;
}

void write_series_csv(std::ostream& out, const ParameterSeries& series) {
  out << "n,t_start_us,value\n";
  for (std::size_t n = 0; n < series.values.size(); ++n) {
    out << n << ',' << series.bin_start_us(n) << ',' << text::format_double(series.values[n])
        << '\n';
  }
}

std::vector<double> read_series_values(std::istream& in) {
  std::vector<double> values;
  for (const auto& row : text::read_csv(in, "n,t_start_us,value")) {
    values.push_back(text::parse_double(row[2]));
  }
  return values;
}

std::vector<TimedHeaders> decode_capture(std::span<const capture::PacketRecord> records,
                                         std::size_t* skipped) {
  std::vector<TimedHeaders> out;
  out.reserve(records.size());
  std::size_t bad = 0;
  for (const auto& rec : records) {
    try {
      out.push_back({rec.timestamp_us, capture::parse_headers(rec)});
    } catch (const Error&) {
      ++bad;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

}  // namespace flowscope::parameters
