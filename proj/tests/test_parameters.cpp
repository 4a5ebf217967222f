#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "flowscope/error.hpp"
#include "flowscope/parameters.hpp"
#include "flowscope/synthgen.hpp"

using namespace flowscope;
using namespace flowscope::parameters;
namespace bits = capture::tcp_bits;

namespace {

capture::ParsedHeaders headers_of(const std::vector<std::uint8_t>& frame) {
  return capture::parse_headers(frame);
}

capture::ParsedHeaders tcp_packet(std::uint8_t flags, std::uint32_t src = 0x0a000001) {
  synthgen::Ipv4Fields ip;
  ip.src = src;
  ip.dst = 0x0a000002;
  ip.protocol = capture::kProtoTcp;
  return headers_of(synthgen::ipv4_frame(ip, synthgen::tcp_segment(1234, 80, 7, 0, flags)));
}

capture::ParsedHeaders proto_packet(std::uint8_t proto) {
  synthgen::Ipv4Fields ip;
  ip.src = 1;
  ip.dst = 2;
  ip.protocol = proto;
  std::vector<std::uint8_t> payload;
  if (proto == capture::kProtoTcp) payload = synthgen::tcp_segment(1, 2, 0, 0, bits::kAck);
  if (proto == capture::kProtoUdp) payload = synthgen::udp_datagram(1, 2, 0);
  if (proto == capture::kProtoIcmp) payload = synthgen::icmp_message(8, 0, 0, 0, 0);
  return headers_of(synthgen::ipv4_frame(ip, payload));
}

std::int64_t sec(double s) { return static_cast<std::int64_t>(std::llround(s * 1e6)); }

}  // namespace

TEST_CASE("classification") {
  for (auto id : kAllParameters) CHECK(classify(id) == Stability::Static);
  CHECK(classify(ParameterId::IpSrc) == Stability::Static);
  CHECK(classify(ParameterId::IpProtocol) == Stability::Static);
  CHECK(classify(LinkField::EthSrc) == Stability::Dynamic);
  CHECK(classify(LinkField::EthDst) == Stability::Dynamic);
  CHECK(classify(LinkField::IpTtl) == Stability::Dynamic);
  CHECK(classify(LinkField::IpChecksum) == Stability::Dynamic);
  static_assert(classify(ParameterId::TcpSeq) == Stability::Static);
}

TEST_CASE("names round-trip") {
  CHECK(kAllParameters.size() == 21);
  for (auto id : kAllParameters) CHECK(parse_parameter(parameter_name(id)) == id);
  CHECK(parameter_name(ParameterId::IpProtocol) == "IP_PROTOCOL");
  CHECK_FALSE(parse_parameter("ETH_SRC"));
  for (auto agg : {Aggregator::Last, Aggregator::Mean, Aggregator::Count, Aggregator::Sum}) {
    CHECK(parse_aggregator(aggregator_name(agg)) == agg);
  }
}

TEST_CASE("extract") {
  auto syn = tcp_packet(bits::kSyn);
  CHECK(extract(syn, ParameterId::TcpSyn) == 1.0);
  CHECK(extract(syn, ParameterId::TcpAck) == 0.0);
  CHECK(extract(syn, ParameterId::TcpDport) == 80.0);
  CHECK(extract(syn, ParameterId::TcpSeq) == 7.0);
  CHECK_FALSE(extract(syn, ParameterId::UdpDport));
  CHECK_FALSE(extract(syn, ParameterId::IcmpType));
  CHECK(extract(syn, ParameterId::IpSrc) == 167772161.0);
  CHECK(extract(syn, ParameterId::IpLength) == 40.0);
  CHECK(extract(syn, ParameterId::IpOptionsLen) == 0.0);

  auto udp = proto_packet(capture::kProtoUdp);
  CHECK_FALSE(extract(udp, ParameterId::TcpDport));
  CHECK(extract(udp, ParameterId::UdpDport) == 2.0);
  CHECK(extract(udp, ParameterId::IpProtocol) == 17.0);

  synthgen::Ipv4Fields ip;
  ip.protocol = capture::kProtoUdp;
  ip.fragment_offset = 5;
  ip.more_fragments = true;
  ip.options = {1, 1, 1, 1};
  ip.id = 99;
  auto frag = headers_of(synthgen::ipv4_frame(ip, std::vector<std::uint8_t>(8, 0)));
  CHECK(extract(frag, ParameterId::IpFragOffset) == 5.0);
  CHECK(extract(frag, ParameterId::IpMfFlag) == 1.0);
  CHECK(extract(frag, ParameterId::IpDfFlag) == 0.0);
  CHECK(extract(frag, ParameterId::IpOptionsLen) == 4.0);
  CHECK(extract(frag, ParameterId::IpId) == 99.0);
  CHECK_FALSE(extract(frag, ParameterId::UdpSport));

  capture::ParsedHeaders arp;
  for (auto id : kAllParameters) CHECK_FALSE(extract(arp, id));
}

TEST_CASE("sample: binning examples") {
  std::vector<TimedHeaders> pk = {{sec(0.1), proto_packet(6)},
                                  {sec(0.2), proto_packet(17)},
                                  {sec(7.0), proto_packet(6)}};
  auto last = sample(pk, ParameterId::IpProtocol, 5.0);
  CHECK(last.values == std::vector<double>{17, 6});
  CHECK(last.t0_us == sec(0.1));
  CHECK(last.tau_us == 5'000'000);
  CHECK(last.bin_start_us(1) == sec(5.1));

  SampleOptions count;
  count.aggregator = Aggregator::Count;
  CHECK(sample(pk, ParameterId::IpProtocol, 5.0, count).values == std::vector<double>{2, 1});

  SampleOptions mean;
  mean.aggregator = Aggregator::Mean;
  CHECK(sample(pk, ParameterId::IpProtocol, 5.0, mean).values == std::vector<double>{11.5, 6});

  CHECK(sample({}, ParameterId::IpProtocol, 5.0).values.empty());
}

TEST_CASE("sample: bin edges, fill and absence") {
  std::vector<TimedHeaders> pk = {{sec(0), proto_packet(6)},
                                  {sec(5), proto_packet(17)},
                                  {sec(20), proto_packet(1)}};
  SampleOptions o;
  o.fill = -1;
  auto s = sample(pk, ParameterId::IpProtocol, 5.0, o);
  // A packet exactly on a boundary opens the next bin.
  CHECK(s.values == std::vector<double>{6, 17, -1, -1, 1});

  std::vector<TimedHeaders> single = {{sec(3), proto_packet(6)}};
  CHECK(sample(single, ParameterId::IpProtocol, 5.0).values == std::vector<double>{6});

  // Packets without the parameter leave the bin at the fill value.
  auto udp_only = sample(pk, ParameterId::TcpDport, 5.0, o);
  CHECK(udp_only.values == std::vector<double>{2, -1, -1, -1, -1});

  SampleOptions c;
  c.aggregator = Aggregator::Count;
  CHECK(sample(pk, ParameterId::TcpDport, 5.0, c).values == std::vector<double>{1, 0, 0, 0, 0});

  SampleOptions t0;
  t0.t0_us = sec(4);
  auto shifted = sample(pk, ParameterId::IpProtocol, 5.0, t0);
  CHECK(shifted.values == std::vector<double>{17, 0, 0, 1});
}

TEST_CASE("sample: invalid tau") {
  std::vector<TimedHeaders> pk = {{0, proto_packet(6)}};
  for (double tau : {0.0, -1.0, std::nan(""), double(INFINITY), 1e-9}) {
    try {
      sample(pk, ParameterId::IpProtocol, tau);
      FAIL("expected InvalidTau");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidTau);
    }
  }
  CHECK(tau_to_us(0.5) == 500'000);
}

TEST_CASE("sample: permutation invariance and SUM = COUNT * MEAN") {
  auto cap = synthgen::synthesize(synthgen::TrafficProfile::with_defaults(3, 30, 40), {});
  auto pk = decode_capture(cap.records);
  std::mt19937_64 rng(11);
  for (auto id : kAllParameters) {
    for (auto agg : {Aggregator::Last, Aggregator::Mean, Aggregator::Count, Aggregator::Sum}) {
      SampleOptions o;
      o.aggregator = agg;
      auto ref = sample(pk, id, 2.0, o);
      auto shuffled = pk;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      CHECK(sample(shuffled, id, 2.0, o).values == ref.values);
    }
  }
  // Duplicate timestamps with different values still give one answer.
  std::vector<TimedHeaders> dup = {{sec(1), proto_packet(6)}, {sec(1), proto_packet(17)}};
  std::vector<TimedHeaders> rev = {dup[1], dup[0]};
  CHECK(sample(dup, ParameterId::IpProtocol, 1.0).values ==
        sample(rev, ParameterId::IpProtocol, 1.0).values);

  SampleOptions sum, count, mean;
  sum.aggregator = Aggregator::Sum;
  count.aggregator = Aggregator::Count;
  mean.aggregator = Aggregator::Mean;
  auto s = sample(pk, ParameterId::IpLength, 1.0, sum).values;
  auto c = sample(pk, ParameterId::IpLength, 1.0, count).values;
  auto m = sample(pk, ParameterId::IpLength, 1.0, mean).values;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (c[i] > 0) CHECK(s[i] == doctest::Approx(c[i] * m[i]).epsilon(1e-9));
  }
}

TEST_CASE("series CSV round trip") {
  std::vector<TimedHeaders> pk = {{sec(0.1), proto_packet(6)},
                                  {sec(0.2), proto_packet(17)},
                                  {sec(7.0), proto_packet(6)}};
  SampleOptions o;
  o.aggregator = Aggregator::Mean;
  auto s = sample(pk, ParameterId::IpProtocol, 5.0, o);
  std::ostringstream out;
  write_series_csv(out, s);
  CHECK(out.str() == "n,t_start_us,value\n0,100000,11.5\n1,5100000,6\n");
  std::istringstream in(out.str());
  CHECK(read_series_values(in) == s.values);

  std::istringstream bad("n,t,value\n0,1,2\n");
  CHECK_THROWS_AS(read_series_values(bad), Error);
}

TEST_CASE("decode_capture skips undecodable frames") {
  std::vector<capture::PacketRecord> recs;
  recs.push_back(synthgen::make_record(1, synthgen::ipv4_frame({}, synthgen::tcp_segment(1, 2, 0, 0, 0))));
  recs.push_back(synthgen::make_record(2, std::vector<std::uint8_t>(5, 0)));
  std::size_t skipped = 0;
  auto pk = decode_capture(recs, &skipped);
  CHECK(pk.size() == 1);
  CHECK(skipped == 1);
  CHECK(pk[0].timestamp_us == 1);
}
