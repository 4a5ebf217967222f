#pragma once

// Static header parameters and their conversion into equal-interval series.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "flowscope/capture.hpp"

namespace flowscope::parameters {

enum class ParameterId {
  IpProtocol,
  IpSrc,
  IpDst,
  IpLength,
  IpMfFlag,
  IpDfFlag,
  IpOptionsLen,
  IpFragOffset,
  IpId,
  TcpSport,
  TcpDport,
  TcpUrg,
  TcpRst,
  TcpAck,
  TcpSyn,
  TcpFin,
  TcpSeq,
  UdpSport,
  UdpDport,
  IcmpType,
  IcmpCode,
};

inline constexpr std::array kAllParameters = {
    ParameterId::IpProtocol, ParameterId::IpSrc,        ParameterId::IpDst,
    ParameterId::IpLength,   ParameterId::IpMfFlag,     ParameterId::IpDfFlag,
    ParameterId::IpOptionsLen, ParameterId::IpFragOffset, ParameterId::IpId,
    ParameterId::TcpSport,   ParameterId::TcpDport,     ParameterId::TcpUrg,
    ParameterId::TcpRst,     ParameterId::TcpAck,       ParameterId::TcpSyn,
    ParameterId::TcpFin,     ParameterId::TcpSeq,       ParameterId::UdpSport,
    ParameterId::UdpDport,   ParameterId::IcmpType,     ParameterId::IcmpCode,
};

/// Header fields that routers may rewrite in transit. They are never
/// extractable parameters.
enum class LinkField { EthSrc, EthDst, IpTtl, IpChecksum };

enum class Stability { Static, Dynamic };

/// Every ParameterId is preserved end to end.
constexpr Stability classify(ParameterId) noexcept { return Stability::Static; }
constexpr Stability classify(LinkField) noexcept { return Stability::Dynamic; }

/// Canonical upper-case name, e.g. "IP_PROTOCOL".
std::string_view parameter_name(ParameterId id) noexcept;
std::optional<ParameterId> parse_parameter(std::string_view name) noexcept;

/// Numeric value of `id` in one packet. Flags are 0/1, addresses their
/// 32-bit value; nullopt when the carrying protocol is absent.
std::optional<double> extract(const capture::ParsedHeaders& headers, ParameterId id) noexcept;

enum class Aggregator { Last, Mean, Count, Sum };

std::string_view aggregator_name(Aggregator agg) noexcept;
std::optional<Aggregator> parse_aggregator(std::string_view name) noexcept;

struct TimedHeaders {
  std::int64_t timestamp_us = 0;
  capture::ParsedHeaders headers;
};

struct ParameterSeries {
  ParameterId parameter = ParameterId::IpProtocol;
  double tau = 0;  // seconds
  std::int64_t tau_us = 0;
  std::int64_t t0_us = 0;
  Aggregator aggregator = Aggregator::Last;
  double fill = 0;
  std::vector<double> values;

  std::int64_t bin_start_us(std::size_t n) const noexcept {
    return t0_us + static_cast<std::int64_t>(n) * tau_us;
  }
};

struct SampleOptions {
  Aggregator aggregator = Aggregator::Last;
  double fill = 0;
  /// Start of bin 0; defaults to the earliest packet timestamp. Packets
  /// before it are ignored.
  std::optional<std::int64_t> t0_us;
};

/// Converts a bin width in seconds to whole microseconds. Throws
/// Error{InvalidTau} unless tau is finite and at least one microsecond.
std::int64_t tau_to_us(double tau);

/// Bins packets into floor((t_last - t0)/tau) + 1 intervals [t0 + n*tau,
/// t0 + (n+1)*tau). Input order is irrelevant.
ParameterSeries sample(std::span<const TimedHeaders> packets, ParameterId parameter, double tau,
                       const SampleOptions& options = {});

/// Decodes every record of a capture. Frames that fail to parse are skipped
/// and counted in `skipped` when it is non-null.
std::vector<TimedHeaders> decode_capture(std::span<const capture::PacketRecord> records,
                                         std::size_t* skipped = nullptr);

/// CSV `n,t_start_us,value`.
void write_series_csv(std::ostream& out, const ParameterSeries& series);
/// Reads the `value` column of a series CSV.
std::vector<double> read_series_values(std::istream& in);

}  // namespace flowscope::parameters
