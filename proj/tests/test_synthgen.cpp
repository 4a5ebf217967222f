#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowscope/error.hpp"
#include "flowscope/signatures.hpp"
#include "flowscope/synthgen.hpp"

using namespace flowscope;
using namespace flowscope::synthgen;

namespace {

std::vector<AttackEpisode> episodes(std::initializer_list<const char*> specs) {
  std::vector<AttackEpisode> out;
  for (const char* s : specs) out.push_back(parse_episode(s));
  return out;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("benign profile: size, parse and zero alerts") {
  auto cap = synthesize(TrafficProfile::with_defaults(42, 10, 50), {});
  CHECK(cap.records.size() >= 400);
  CHECK(cap.records.size() <= 600);
  CHECK(cap.manifest.empty());
  auto bytes = capture::encode_pcap(cap.header, cap.records);
  auto back = capture::read_pcap(bytes);
  CHECK(back.header.magic == capture::kMagicMicros);
  CHECK(back.header.linktype == 1);
  REQUIRE(back.records.size() == cap.records.size());
  std::size_t skipped = 99;
  auto pk = parameters::decode_capture(back.records, &skipped);
  CHECK(skipped == 0);
  CHECK(signatures::scan(signatures::builtin_catalog(), pk).empty());
  CHECK(std::is_sorted(pk.begin(), pk.end(),
                       [](const auto& a, const auto& b) { return a.timestamp_us < b.timestamp_us; }));
}

TEST_CASE("benign TCP sessions follow the handshake script") {
  auto cap = synthesize(TrafficProfile::with_defaults(7, 30, 50), {});
  auto pk = parameters::decode_capture(cap.records);
  std::size_t syn = 0, synack = 0, fin = 0, tcp = 0, udp = 0, icmp = 0;
  for (const auto& p : pk) {
    REQUIRE(p.headers.ip);
    if (p.headers.tcp) {
      ++tcp;
      CHECK(p.headers.ip->dont_fragment);
      const auto f = p.headers.tcp->flags;
      if (f.syn && !f.ack) ++syn;
      if (f.syn && f.ack) ++synack;
      if (f.fin) ++fin;
    }
    if (p.headers.udp) ++udp;
    if (p.headers.icmp) ++icmp;
  }
  CHECK(tcp + udp + icmp == pk.size());
  CHECK(syn > 0);
  // Sessions still open at the end of the capture may miss later packets.
  CHECK(synack <= syn);
  CHECK(synack + 5 >= syn);
  CHECK(fin <= 2 * syn);
  CHECK(tcp > udp);
  CHECK(udp > icmp);
}

TEST_CASE("determinism") {
  auto dir = std::filesystem::temp_directory_path() / "flowscope_gen_test";
  std::filesystem::create_directories(dir);
  auto eps = episodes({"SYN_FLOOD:2:4", "LAND:5:6", "BONK:7:8"});
  auto profile = TrafficProfile::with_defaults(42, 10, 50);
  auto m1 = generate(profile, eps, dir / "a.pcap");
  auto m2 = generate(profile, eps, dir / "b.pcap");
  CHECK(slurp(dir / "a.pcap") == slurp(dir / "b.pcap"));
  REQUIRE(m1.size() == m2.size());
  std::ostringstream j1, j2;
  write_manifest_json(j1, m1);
  write_manifest_json(j2, m2);
  CHECK(j1.str() == j2.str());

  auto other = generate(TrafficProfile::with_defaults(43, 10, 50), eps, dir / "c.pcap");
  CHECK(slurp(dir / "a.pcap") != slurp(dir / "c.pcap"));
  CHECK_THROWS_AS(generate(profile, eps, dir / "no" / "such" / "x.pcap"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("LAND episode round trip") {
  auto cap = synthesize(TrafficProfile::with_defaults(42, 10, 50), episodes({"LAND:2:3"}));
  REQUIRE(cap.manifest.size() == 5);
  auto pk = parameters::decode_capture(cap.records);
  auto alerts = signatures::scan(signatures::builtin_catalog(), pk);
  std::vector<std::int64_t> land_ts;
  for (const auto& a : alerts) {
    if (a.rule == "LAND") land_ts.push_back(a.timestamp_us);
  }
  CHECK(land_ts.size() >= 5);
  for (const auto& m : cap.manifest) {
    CHECK(m.kind == "LAND");
    CHECK(std::find(land_ts.begin(), land_ts.end(), m.ts_us) != land_ts.end());
  }
}

TEST_CASE("manifest packets carry their attack") {
  const auto catalog = signatures::builtin_catalog();
  for (const auto& kind : supported_kinds()) {
    CAPTURE(kind);
    auto cap = synthesize(TrafficProfile::with_defaults(11, 10, 20),
                     std::vector<AttackEpisode>{parse_episode(kind + ":2:6")});
    REQUIRE_FALSE(cap.manifest.empty());
    const auto* rule = signatures::find_rule(catalog, kind);
    REQUIRE(rule != nullptr);
    for (const auto& m : cap.manifest) {
      auto it = std::find_if(cap.records.begin(), cap.records.end(), [&](const auto& r) {
        if (r.timestamp_us != m.ts_us) return false;
        auto h = capture::parse_headers(r);
        return h.ip && h.ip->src == m.src && h.ip->dst == m.dst;
      });
      REQUIRE(it != cap.records.end());
      auto h = capture::parse_headers(*it);
      CHECK(m.ts_us >= cap.records.front().timestamp_us);
      if (rule->predicate) {
        CHECK(rule->predicate(h, signatures::RuleContext{}));
      } else if (rule->detector == signatures::Detector::SynFlood) {
        REQUIRE(h.tcp);
        CHECK(h.tcp->flags.syn);
        CHECK_FALSE(h.tcp->flags.ack);
      } else {
        CHECK(h.ip->is_fragment());
        if (rule->detector == signatures::Detector::Bonk) CHECK(h.ip->protocol == capture::kProtoUdp);
      }
    }
  }
}

TEST_CASE("episode parameters") {
  auto ep = parse_episode("SYN_FLOOD:1.5:3:rate=400,port=443,target=10.0.1.12");
  CHECK(ep.kind == "SYN_FLOOD");
  CHECK(ep.t_start == 1.5);
  CHECK(ep.t_end == 3);
  CHECK(ep.params.at("port") == "443");
  auto cap = synthesize(TrafficProfile::with_defaults(1, 5, 10), std::vector<AttackEpisode>{ep});
  CHECK(cap.manifest.size() == 600);
  for (const auto& m : cap.manifest) {
    CHECK(m.dst == 0x0a00010cu);
    CHECK(m.ts_us >= 1'600'000'001'500'000);
    CHECK(m.ts_us < 1'600'000'003'000'000);
  }
  auto counted = synthesize(TrafficProfile::with_defaults(1, 5, 10),
                            std::vector<AttackEpisode>{parse_episode("SMURF:1:2:count=7")});
  CHECK(counted.manifest.size() == 7);

  CHECK_THROWS_AS(parse_episode("LAND:1"), Error);
  CHECK_THROWS_AS(parse_episode("LAND:x:2"), Error);
  CHECK_THROWS_AS(parse_episode("LAND:1:2:oops"), Error);
}

TEST_CASE("invalid episodes and profiles") {
  auto profile = TrafficProfile::with_defaults(1, 10, 10);
  auto code = [&](std::vector<AttackEpisode> eps, TrafficProfile p) {
    try {
      synthesize(p, eps);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ParseError;
  };
  CHECK(code(episodes({"BRKILL:1:2"}), profile) == ErrorCode::UnknownKind);
  CHECK(code(episodes({"TCP_HIJACKING:1:2"}), profile) == ErrorCode::UnknownKind);
  CHECK(code(episodes({"WHATEVER:1:2"}), profile) == ErrorCode::UnknownKind);
  CHECK(code(episodes({"LAND:3:2"}), profile) == ErrorCode::InvalidArgument);
  CHECK(code(episodes({"LAND:3:11"}), profile) == ErrorCode::InvalidArgument);
  auto zero_rate = profile;
  zero_rate.rate = 0;
  CHECK(code({}, zero_rate) == ErrorCode::InvalidArgument);
  auto bad_mix = profile;
  bad_mix.mix = {0, 0, 0};
  CHECK(code({}, bad_mix) == ErrorCode::InvalidArgument);
  auto neg_mix = profile;
  neg_mix.mix.udp = -1;
  CHECK(code({}, neg_mix) == ErrorCode::InvalidArgument);
}

TEST_CASE("protocol mix weights") {
  auto p = TrafficProfile::with_defaults(3, 20, 50);
  p.mix = {0, 1, 0};
  auto cap = synthesize(p, {});
  for (const auto& r : cap.records) CHECK(capture::parse_headers(r).udp);
}

TEST_CASE("manifest JSON") {
  std::vector<ManifestEntry> m = {{5, "LAND", 0x0a000001, 0x0a000001}};
  std::ostringstream out;
  write_manifest_json(out, m);
  auto j = nlohmann::json::parse(out.str());
  REQUIRE(j.is_array());
  CHECK(j[0]["ts_us"] == 5);
  CHECK(j[0]["kind"] == "LAND");
  CHECK(j[0]["src"] == "10.0.0.1");
  CHECK(j[0]["dst"] == "10.0.0.1");
}
