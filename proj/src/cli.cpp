#include "flowscope/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "flowscope/capture.hpp"
#include "flowscope/embedding.hpp"
#include "flowscope/error.hpp"
#include "flowscope/multiwindow.hpp"
#include "flowscope/parameters.hpp"
#include "flowscope/signatures.hpp"
#include "flowscope/synthgen.hpp"
#include "flowscope/text_io.hpp"
#include "flowscope/trajectory.hpp"

namespace flowscope::cli {
namespace {

namespace fs = std::filesystem;
using parameters::TimedHeaders;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

parameters::ParameterId parameter_flag(const std::string& name) {
  auto id = parameters::parse_parameter(name);
  if (!id) throw UsageError("unknown parameter '" + name + "'");
  return *id;
}

parameters::Aggregator aggregator_flag(const std::string& name) {
  auto agg = parameters::parse_aggregator(name);
  if (!agg) throw UsageError("unknown aggregator '" + name + "' (last, mean, count, sum)");
  return *agg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::WriteFailure, "cannot open " + path.string() + " for writing");
  return f;
}

void close_out(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw Error(ErrorCode::WriteFailure, "failed writing " + path.string());
}

// Writes to `path` when given, else to `fallback`.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty()) {
    fn(fallback);
    return;
  }
  auto f = open_out(path);
  fn(f);
  close_out(f, path);
}

template <typename Fn>
void emit_file(const fs::path& path, Fn&& fn) {
  auto f = open_out(path);
  fn(f);
  close_out(f, path);
}

std::vector<TimedHeaders> load_packets(const std::string& pcap, std::ostream& err) {
  const auto cap = capture::read_pcap_file(pcap);
  std::size_t skipped = 0;
  auto packets = parameters::decode_capture(cap.records, &skipped);
  if (skipped > 0) err << "warning: skipped " << skipped << " undecodable frames\n";
  return packets;
}

struct SeriesArgs {
  std::string pcap;
  std::string series;
  std::string param = "IP_PROTOCOL";
  double tau = 5.0;
  std::string agg = "last";
  double fill = 0.0;

  void add_to(CLI::App* cmd, bool allow_series) {
    auto* p = cmd->add_option("--pcap", pcap, "Input capture")->check(CLI::ExistingFile);
    if (allow_series) {
      auto* s = cmd->add_option("--series", series, "Series CSV (n,t_start_us,value)")
                    ->check(CLI::ExistingFile);
      p->excludes(s);
    } else {
      p->required();
    }
    cmd->add_option("--param", param, "Header parameter")->capture_default_str();
    cmd->add_option("--tau", tau, "Bin width in seconds")->capture_default_str();
    cmd->add_option("--agg", agg, "Aggregator: last, mean, count, sum")->capture_default_str();
    cmd->add_option("--fill", fill, "Value for empty bins")->capture_default_str();
  }

  std::vector<double> values(std::ostream& err) const {
    if (!series.empty()) {
      std::ifstream in(series);
      if (!in) throw Error(ErrorCode::IoError, "cannot open " + series);
      return parameters::read_series_values(in);
    }
    if (pcap.empty()) throw UsageError("one of --pcap or --series is required");
    return sampled(err).values;
  }

  parameters::ParameterSeries sampled(std::ostream& err) const {
    const auto id = parameter_flag(param);
    parameters::SampleOptions opts;
    opts.aggregator = aggregator_flag(agg);
    opts.fill = fill;
    const auto packets = load_packets(pcap, err);
    return parameters::sample(packets, id, tau, opts);
  }
};

std::string quoted(const fs::path& p) { return "'" + p.filename().string() + "'"; }

void series_plot(std::ostream& gp, const fs::path& csv, const std::string& param, double tau) {
  gp << "set datafile separator ','\n"
     << "set key off\n"
     << "set title '" << param << " (tau = " << text::format_double(tau) << " s)'\n"
     << "set xlabel 'time (s)'\n"
     << "set ylabel '" << param << "'\n"
     << "plot " << quoted(csv) << " every ::1 using (($2 - t0) / 1e6):3 with steps\n";
}

void fnn_plot(std::ostream& gp, const fs::path& csv) {
  gp << "set datafile separator ','\n"
     << "set key off\n"
     << "set xlabel 'embedding dimension'\n"
     << "set ylabel 'false nearest neighbor fraction'\n"
     << "set yrange [0:1]\n"
     << "plot " << quoted(csv) << " every ::1 using 1:2 with linespoints\n";
}

void projection_plot(std::ostream& gp, const fs::path& csv, std::span<const std::size_t> axes) {
  gp << "set datafile separator ','\n"
     << "set key off\n";
  auto label = [&](std::size_t i) { return "'s(n + " + std::to_string(axes[i]) + "T)'"; };
  gp << "set xlabel " << label(0) << "\nset ylabel " << label(1) << '\n';
  if (axes.size() == 3) {
    gp << "set zlabel " << label(2) << '\n'
       << "splot " << quoted(csv) << " every ::1 using 2:3:4 with linespoints pt 7 ps 0.5\n";
  } else {
    gp << "plot " << quoted(csv) << " every ::1 using 2:3 with linespoints pt 7 ps 0.5\n";
  }
}

void frequency_plot(std::ostream& gp, const fs::path& csv) {
  gp << "set datafile separator ','\n"
     << "set key off\n"
     << "set style fill solid 0.6\n"
     << "set boxwidth 0.8\n"
     << "set xlabel 'parameter number'\n"
     << "set ylabel 'frequency'\n"
     << "set xtics 1\n"
     << "plot " << quoted(csv) << " every ::1 using 1:4 with boxes\n";
}

fs::path plot_path(const std::string& flag, const std::string& data_path) {
  if (!flag.empty()) return flag;
  if (data_path.empty()) throw UsageError("--emit-plot needs --out so the script can reference the data");
  return fs::path(data_path).replace_extension(".gp");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Header-parameter time series, embedding and signature analysis of pcap captures",
               "flowscope"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  // extract
  SeriesArgs ex_src;
  std::string ex_out;
  std::optional<std::string> ex_plot;
  auto* extract = app.add_subcommand("extract", "Sample one header parameter into a series CSV");
  ex_src.add_to(extract, false);
  extract->add_option("--out", ex_out, "Output CSV (default stdout)");
  extract->add_option("--emit-plot", ex_plot, "Write a gnuplot script (default <out>.gp)")
      ->expected(0, 1);

  // fnn
  SeriesArgs fnn_src;
  embedding::EmbeddingConfig fnn_cfg;
  std::size_t fnn_delay = 1;
  double fnn_threshold = 0.01;
  std::string fnn_out;
  std::optional<std::string> fnn_plot_path;
  auto* fnn = app.add_subcommand("fnn", "False nearest neighbor curve of a series");
  fnn_src.add_to(fnn, true);
  fnn->add_option("--max-dim", fnn_cfg.max_dim, "Largest dimension")->capture_default_str();
  fnn->add_option("--delay", fnn_delay, "Embedding delay in bins; 0 picks it from the autocorrelation")
      ->capture_default_str();
  fnn->add_option("--r-tol", fnn_cfg.r_tol, "Relative growth tolerance")->capture_default_str();
  fnn->add_option("--a-tol", fnn_cfg.a_tol, "Attractor size tolerance")->capture_default_str();
  fnn->add_option("--theiler", fnn_cfg.theiler_w, "Theiler window")->capture_default_str();
  fnn->add_option("--threshold", fnn_threshold, "Fraction for the dimension estimate")
      ->capture_default_str();
  fnn->add_option("--out", fnn_out, "Output CSV (default stdout)");
  fnn->add_option("--emit-plot", fnn_plot_path, "Write a gnuplot script (default <out>.gp)")
      ->expected(0, 1);

  // trajectory
  SeriesArgs tr_src;
  std::size_t tr_dim = 3;
  std::size_t tr_delay = 1;
  std::vector<std::size_t> tr_axes{0, 1, 2};
  std::size_t tr_bins = 20;
  std::string tr_prefix;
  bool tr_plot = false;
  auto* traj = app.add_subcommand("trajectory", "Delay-embedded projection and occupancy histogram");
  tr_src.add_to(traj, true);
  traj->add_option("--dim", tr_dim, "Embedding dimension")->capture_default_str();
  traj->add_option("--delay", tr_delay, "Embedding delay in bins")->capture_default_str();
  traj->add_option("--axes", tr_axes, "Projection axes, e.g. 0,1 or 0,1,2")->delimiter(',');
  traj->add_option("--bins", tr_bins, "Cells per axis")->capture_default_str();
  traj->add_option("--out-prefix", tr_prefix, "Output path prefix")->required();
  traj->add_flag("--emit-plot", tr_plot, "Write <prefix>.gp");

  // scan
  std::string sc_pcap;
  int sc_prefix = 24;
  signatures::StatefulConfig sc_cfg;
  std::string sc_out;
  std::string sc_format = "jsonl";
  auto* scanc = app.add_subcommand("scan", "Run the signature catalog over a capture");
  scanc->add_option("--pcap", sc_pcap, "Input capture")->required()->check(CLI::ExistingFile);
  scanc->add_option("--netmask", sc_prefix, "Prefix length for broadcast detection")
      ->capture_default_str();
  scanc->add_option("--syn-k", sc_cfg.syn_threshold, "Half-open connection threshold")
      ->capture_default_str();
  scanc->add_option("--syn-w", sc_cfg.syn_window_s, "SYN flood window in seconds")
      ->capture_default_str();
  scanc->add_option("--scan-k", sc_cfg.scan_threshold, "Distinct port threshold")
      ->capture_default_str();
  scanc->add_option("--scan-w", sc_cfg.scan_window_s, "Port sweep window in seconds")
      ->capture_default_str();
  scanc->add_option("--out", sc_out, "Alert output (default stdout)");
  scanc->add_option("--format", sc_format, "jsonl or csv")
      ->check(CLI::IsMember({"jsonl", "csv"}))
      ->capture_default_str();

  // monitor
  std::string mo_pcap, mo_plan, mo_out, mo_alerts;
  int mo_prefix = 24;
  std::optional<double> mo_percentile;
  bool mo_sequential = false;
  auto* monitor = app.add_subcommand("monitor", "Multi-time-scale deviation monitoring");
  monitor->add_option("--pcap", mo_pcap, "Input capture")->required()->check(CLI::ExistingFile);
  monitor->add_option("--plan", mo_plan, "Plan file (JSON array of window specs)")
      ->required()
      ->check(CLI::ExistingFile);
  monitor->add_option("--out", mo_out, "Report JSON Lines (default stdout)");
  monitor->add_option("--alerts", mo_alerts, "Alert JSON Lines");
  monitor->add_option("--netmask", mo_prefix, "Prefix length for broadcast detection")
      ->capture_default_str();
  monitor->add_option("--cascade-percentile", mo_percentile,
                      "Hint longer scales about short windows above this percentile")
      ->check(CLI::Range(0.0, 100.0));
  monitor->add_flag("--sequential", mo_sequential, "Analyze specs one after another");

  // gen
  std::uint64_t gen_seed = 42;
  double gen_duration = 10.0;
  double gen_rate = 50.0;
  std::vector<std::string> gen_episodes;
  std::string gen_out, gen_manifest;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic capture");
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--duration", gen_duration, "Seconds of traffic")->capture_default_str();
  gen->add_option("--rate", gen_rate, "Mean background packets per second")->capture_default_str();
  gen->add_option("--episode", gen_episodes, "kind:start:end[:k=v,...] (repeatable)")
      ->take_all()
      ->allow_extra_args(false);
  gen->add_option("--out", gen_out, "Output pcap")->required();
  gen->add_option("--manifest", gen_manifest, "Ground-truth manifest JSON");

  // freq
  std::string fq_out;
  bool fq_plot = false;
  auto* freq = app.add_subcommand("freq", "Parameter frequency table of the signature catalog");
  freq->add_option("--out", fq_out, "Output CSV (default stdout)");
  freq->add_flag("--emit-plot", fq_plot, "Write <out>.gp");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (extract->parsed()) {
      const auto series = ex_src.sampled(err);
      emit(ex_out, out, [&](std::ostream& o) { parameters::write_series_csv(o, series); });
      if (ex_plot) {
        const auto gp = plot_path(*ex_plot, ex_out);
        emit_file(gp, [&](std::ostream& o) {
          o << "t0 = " << series.t0_us << '\n';
          series_plot(o, ex_out, ex_src.param, series.tau);
        });
      }
    } else if (fnn->parsed()) {
      const auto values = fnn_src.values(err);
      fnn_cfg.delay = fnn_delay == 0 ? embedding::default_delay(values) : fnn_delay;
      const auto curve = embedding::fnn_curve(values, fnn_cfg);
      emit(fnn_out, out, [&](std::ostream& o) { embedding::write_fnn_csv(o, curve); });
      const auto d = embedding::estimate_dimension(curve, fnn_threshold);
      err << "delay " << fnn_cfg.delay << ", estimated dimension ";
      if (d) {
        err << *d;
      } else {
        err << "none (fraction stays above " << text::format_double(fnn_threshold) << ")";
      }
      err << '\n';
      if (fnn_plot_path) {
        const auto gp = plot_path(*fnn_plot_path, fnn_out);
        emit_file(gp, [&](std::ostream& o) { fnn_plot(o, fnn_out); });
      }
    } else if (traj->parsed()) {
      const auto values = tr_src.values(err);
      const auto vectors = embedding::build_delay_vectors(values, tr_dim, tr_delay);
      const auto proj = trajectory::project(vectors, tr_axes);
      const auto hist = trajectory::occupancy(proj, tr_bins);
      const fs::path proj_csv = tr_prefix + "_projection.csv";
      emit_file(proj_csv, [&](std::ostream& o) { trajectory::write_projection_csv(o, proj); });
      trajectory::save_histogram(hist, tr_prefix + "_histogram");
      if (tr_plot) {
        emit_file(tr_prefix + ".gp", [&](std::ostream& o) { projection_plot(o, proj_csv, tr_axes); });
      }
    } else if (scanc->parsed()) {
      signatures::ScanConfig cfg;
      cfg.context.netmask = signatures::prefix_to_netmask(sc_prefix);
      cfg.stateful = sc_cfg;
      const auto packets = load_packets(sc_pcap, err);
      const auto catalog = signatures::builtin_catalog();
      const auto alerts = signatures::scan(catalog, packets, cfg);
      emit(sc_out, out, [&](std::ostream& o) {
        if (sc_format == "jsonl") {
          signatures::write_alerts_jsonl(o, alerts);
          return;
        }
        o << "rule,ts_us,src,dst,detail\n";
        for (const auto& a : alerts) {
          o << a.rule << ',' << a.timestamp_us << ',' << capture::format_ipv4(a.src) << ','
            << capture::format_ipv4(a.dst) << ',' << a.detail << '\n';
        }
      });
    } else if (monitor->parsed()) {
      const auto specs = multiwindow::load_plan(mo_plan);
      const auto packets = load_packets(mo_pcap, err);
      const auto catalog = signatures::builtin_catalog();
      multiwindow::PlanOptions opts;
      opts.scan.context.netmask = signatures::prefix_to_netmask(mo_prefix);
      opts.parallel = !mo_sequential;
      auto result = multiwindow::run_plan(packets, specs, catalog, opts);
      if (mo_percentile) multiwindow::apply_cascade(result.reports, specs, *mo_percentile);
      emit(mo_out, out, [&](std::ostream& o) { multiwindow::write_reports_jsonl(o, result.reports); });
      if (!mo_alerts.empty()) {
        emit_file(mo_alerts, [&](std::ostream& o) { signatures::write_alerts_jsonl(o, result.alerts); });
      }
      for (const auto& e : result.errors) {
        err << "error: spec '" << e.label << "': " << e.message << '\n';
      }
      if (!result.errors.empty()) return kExitData;
    } else if (gen->parsed()) {
      auto profile = synthgen::TrafficProfile::with_defaults(gen_seed, gen_duration, gen_rate);
      std::vector<synthgen::AttackEpisode> episodes;
      for (const auto& e : gen_episodes) episodes.push_back(synthgen::parse_episode(e));
      const auto manifest = synthgen::generate(profile, episodes, gen_out);
      if (!gen_manifest.empty()) {
        emit_file(gen_manifest, [&](std::ostream& o) { synthgen::write_manifest_json(o, manifest); });
      }
    } else if (freq->parsed()) {
      const auto table = signatures::frequency_table(signatures::builtin_catalog());
      emit(fq_out, out, [&](std::ostream& o) { signatures::write_frequency_csv(o, table); });
      if (fq_plot) {
        emit_file(plot_path("", fq_out), [&](std::ostream& o) { frequency_plot(o, fq_out); });
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace flowscope::cli
