#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowscope/cli.hpp"
#include "flowscope/embedding.hpp"
#include "flowscope/multiwindow.hpp"
#include "flowscope/signatures.hpp"
#include "flowscope/synthgen.hpp"
#include "flowscope/text_io.hpp"

using namespace flowscope;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "flowscope_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  auto none = run({});
  CHECK(none.code == cli::kExitUsage);
  CHECK(none.err.find("Usage") != std::string::npos);
  auto bogus = run({"bogus"});
  CHECK(bogus.code == cli::kExitUsage);
  CHECK(bogus.err.find("extract") != std::string::npos);
  CHECK(run({"extract", "--pcap"}).code == cli::kExitUsage);
  CHECK(run({"freq", "--bogus-flag"}).code == cli::kExitUsage);
  CHECK(run({"freq", "scan"}).code == cli::kExitUsage);
  auto help = run({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(help.out.find("monitor") != std::string::npos);
}

TEST_CASE("data errors exit 2 with the error name") {
  TempDir dir;
  {
    std::ofstream f(dir / "junk.pcap", std::ios::binary);
    f << "this is not a capture file";
  }
  auto r = run({"extract", "--pcap", dir / "junk.pcap", "--param", "IP_PROTOCOL"});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("BadMagic") != std::string::npos);
  CHECK(r.out.empty());

  {
    std::ofstream f(dir / "short.pcap", std::ios::binary);
    f << "\xd4\xc3\xb2\xa1";
  }
  auto t = run({"scan", "--pcap", dir / "short.pcap"});
  CHECK(t.code == cli::kExitData);
  CHECK(t.err.find("Truncated") != std::string::npos);

  REQUIRE(run({"gen", "--duration", "5", "--out", dir / "g.pcap"}).code == 0);
  auto p = run({"extract", "--pcap", dir / "g.pcap", "--param", "NOT_A_PARAM"});
  CHECK(p.code == cli::kExitUsage);
  auto tau = run({"extract", "--pcap", dir / "g.pcap", "--tau", "0"});
  CHECK(tau.code == cli::kExitData);
  CHECK(tau.err.find("InvalidTau") != std::string::npos);
  auto kind = run({"gen", "--out", dir / "h.pcap", "--episode", "BRKILL:1:2"});
  CHECK(kind.code == cli::kExitData);
  CHECK(kind.err.find("UnknownKind") != std::string::npos);
}

TEST_CASE("pipeline output equals direct library calls") {
  TempDir dir;
  REQUIRE(run({"gen", "--seed", "4", "--duration", "300", "--rate", "40", "--episode",
               "SYN_FLOOD:100:110", "--episode", "LAND:20:21", "--out", dir / "c.pcap",
               "--manifest", dir / "m.json"})
              .code == 0);
  auto profile = synthgen::TrafficProfile::with_defaults(4, 300, 40);
  std::vector<synthgen::AttackEpisode> eps = {synthgen::parse_episode("SYN_FLOOD:100:110"),
                                              synthgen::parse_episode("LAND:20:21")};
  auto cap = synthgen::synthesize(profile, eps);
  CHECK(slurp(dir / "c.pcap") ==
        [&] {
          auto b = capture::encode_pcap(cap.header, cap.records);
          return std::string(b.begin(), b.end());
        }());
  std::ostringstream manifest;
  synthgen::write_manifest_json(manifest, cap.manifest);
  CHECK(slurp(dir / "m.json") == manifest.str());

  auto pk = parameters::decode_capture(cap.records);

  auto ex = run({"extract", "--pcap", dir / "c.pcap", "--param", "IP_PROTOCOL", "--tau", "5", "--agg", "last"});
  REQUIRE(ex.code == 0);
  std::ostringstream series_csv;
  auto series = parameters::sample(pk, parameters::ParameterId::IpProtocol, 5.0);
  parameters::write_series_csv(series_csv, series);
  CHECK(ex.out == series_csv.str());

  {
    std::ofstream f(dir / "s.csv");
    f << ex.out;
  }
  auto fnn = run({"fnn", "--series", dir / "s.csv", "--max-dim", "6"});
  REQUIRE(fnn.code == 0);
  embedding::EmbeddingConfig cfg;
  cfg.max_dim = 6;
  auto curve = embedding::fnn_curve(series.values, cfg);
  std::ostringstream fnn_csv;
  embedding::write_fnn_csv(fnn_csv, curve);
  CHECK(fnn.out == fnn_csv.str());
  CHECK(fnn.err.find("estimated dimension") != std::string::npos);

  auto fnn_pcap = run({"fnn", "--pcap", dir / "c.pcap", "--param", "IP_PROTOCOL", "--max-dim", "6"});
  CHECK(fnn_pcap.out == fnn.out);

  auto sc = run({"scan", "--pcap", dir / "c.pcap", "--netmask", "24", "--syn-k", "100", "--syn-w", "5"});
  REQUIRE(sc.code == 0);
  std::ostringstream alerts;
  signatures::write_alerts_jsonl(alerts, signatures::scan(signatures::builtin_catalog(), pk));
  CHECK(sc.out == alerts.str());
  CHECK(sc.out.find("\"rule\":\"SYN_FLOOD\"") != std::string::npos);
  CHECK(sc.out.find("\"rule\":\"LAND\"") != std::string::npos);

  auto strict = run({"scan", "--pcap", dir / "c.pcap", "--syn-k", "100000", "--format", "csv"});
  CHECK(strict.out.rfind("rule,ts_us,src,dst,detail\n", 0) == 0);
  CHECK(strict.out.find("SYN_FLOOD") == std::string::npos);

  auto fq = run({"freq"});
  std::ostringstream table;
  signatures::write_frequency_csv(table, signatures::frequency_table(signatures::builtin_catalog()));
  CHECK(fq.out == table.str());
}

TEST_CASE("trajectory and plot sidecars") {
  TempDir dir;
  REQUIRE(run({"gen", "--duration", "200", "--out", dir / "c.pcap"}).code == 0);
  auto t3 = run({"trajectory", "--pcap", dir / "c.pcap", "--param", "IP_LENGTH", "--agg", "mean",
                 "--tau", "1", "--axes", "0,1,2", "--bins", "8", "--out-prefix", dir / "t3", "--emit-plot"});
  REQUIRE(t3.code == 0);
  auto proj = slurp(dir / "t3_projection.csv");
  CHECK(proj.rfind("t_index,x,y,z\n", 0) == 0);
  CHECK(slurp(dir / "t3_histogram.csv").rfind("cell_index,mass\n", 0) == 0);
  auto side = nlohmann::json::parse(slurp(dir / "t3_histogram.json"));
  CHECK(side["bins_per_axis"] == 8);
  CHECK(side["axes"].size() == 3);
  CHECK(slurp(dir / "t3.gp").find("splot") != std::string::npos);

  auto t2 = run({"trajectory", "--pcap", dir / "c.pcap", "--axes", "0,1", "--out-prefix", dir / "t2", "--emit-plot"});
  REQUIRE(t2.code == 0);
  CHECK(slurp(dir / "t2_projection.csv").rfind("t_index,x,y\n", 0) == 0);
  auto gp2 = slurp(dir / "t2.gp");
  CHECK(gp2.find("plot") != std::string::npos);
  CHECK(gp2.find("splot") == std::string::npos);

  auto bad_axes = run({"trajectory", "--pcap", dir / "c.pcap", "--axes", "1,1", "--out-prefix", dir / "t4"});
  CHECK(bad_axes.code == cli::kExitData);
  CHECK(bad_axes.err.find("BadAxes") != std::string::npos);

  REQUIRE(run({"extract", "--pcap", dir / "c.pcap", "--out", dir / "s.csv", "--emit-plot"}).code == 0);
  CHECK(fs::exists(dir / "s.gp"));
  REQUIRE(run({"fnn", "--series", dir / "s.csv", "--out", dir / "f.csv", "--emit-plot", dir / "fplot.gp"}).code == 0);
  CHECK(slurp(dir / "fplot.gp").find("'f.csv'") != std::string::npos);
  REQUIRE(run({"freq", "--out", dir / "freq.csv", "--emit-plot"}).code == 0);
  CHECK(slurp(dir / "freq.gp").find("boxes") != std::string::npos);
  CHECK(run({"extract", "--pcap", dir / "c.pcap", "--emit-plot"}).code == cli::kExitUsage);
}

TEST_CASE("monitor") {
  TempDir dir;
  REQUIRE(run({"gen", "--seed", "9", "--duration", "300", "--out", dir / "base.pcap"}).code == 0);
  REQUIRE(run({"gen", "--seed", "10", "--duration", "120", "--episode", "SYN_FLOOD:60:70",
               "--out", dir / "obs.pcap"})
              .code == 0);
  REQUIRE(run({"trajectory", "--pcap", dir / "base.pcap", "--param", "TCP_SYN", "--tau", "5",
               "--axes", "0,1", "--bins", "20", "--out-prefix", dir / "base"})
              .code == 0);
  {
    std::ofstream f(dir / "plan.json");
    f << R"([{"label":"fast","tau":1,"window_len":20,"parameters":["TCP_SYN"],"baseline":"base_histogram.json"},
             {"label":"slow","tau":5,"window_len":12,"parameters":["TCP_SYN"],"baseline":"base_histogram.json"}])";
  }
  auto m = run({"monitor", "--pcap", dir / "obs.pcap", "--plan", dir / "plan.json", "--out",
                dir / "r.jsonl", "--alerts", dir / "a.jsonl", "--cascade-percentile", "90"});
  REQUIRE(m.code == 0);
  auto reports = slurp(dir / "r.jsonl");
  std::istringstream lines(reports);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("label"));
    CHECK(j["scores"].contains("TCP_SYN"));
    ++n;
  }
  CHECK(n == 6 + 2);
  CHECK(slurp(dir / "a.jsonl").find("SYN_FLOOD") != std::string::npos);

  auto again = run({"monitor", "--pcap", dir / "obs.pcap", "--plan", dir / "plan.json", "--sequential",
                    "--cascade-percentile", "90"});
  CHECK(again.out == reports);

  {
    std::ofstream f(dir / "bad.json");
    f << R"([{"label":"ok","tau":5,"window_len":12,"parameters":["TCP_SYN"]},
             {"label":"zero","tau":0,"window_len":12,"parameters":["TCP_SYN"]}])";
  }
  auto partial = run({"monitor", "--pcap", dir / "obs.pcap", "--plan", dir / "bad.json"});
  CHECK(partial.code == cli::kExitData);
  CHECK(partial.err.find("zero") != std::string::npos);
  CHECK(partial.out.find("\"label\":\"ok\"") != std::string::npos);
}

TEST_CASE("installed binary") {
  TempDir dir;
  const std::string bin = FLOWSCOPE_CLI_PATH;
  CHECK(std::system((bin + " freq > " + (dir / "f.csv")).c_str()) == 0);
  CHECK(slurp(dir / "f.csv").rfind("Number,Protocol,Parameter,Frequency", 0) == 0);
  int status = std::system((bin + " nonsense 2> " + (dir / "e.txt")).c_str());
  CHECK(WEXITSTATUS(status) == 1);
}
