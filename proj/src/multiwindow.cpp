#include "flowscope/multiwindow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowscope/embedding.hpp"

namespace flowscope::multiwindow {
namespace {

using parameters::TimedHeaders;

void validate(const WindowSpec& spec) {
  parameters::tau_to_us(spec.tau);
  if (spec.window_len < 2) {
    throw Error(ErrorCode::InvalidArgument, "window_len must be >= 2");
  }
  if (spec.delay < 1 || spec.embed_dim < 2) {
    throw Error(ErrorCode::InvalidArgument, "embedding needs dim >= 2 and delay >= 1");
  }
  for (auto a : spec.axes) {
    if (a >= spec.embed_dim) throw Error(ErrorCode::BadAxes, "axis beyond embedding dimension");
  }
}

std::optional<double> window_score(std::span<const double> window, const WindowSpec& spec,
                                   const trajectory::OccupancyHistogram& baseline) {
  if (window.size() < (spec.embed_dim - 1) * spec.delay + 1) return std::nullopt;
  const auto vectors = embedding::build_delay_vectors(window, spec.embed_dim, spec.delay);
  const auto proj = trajectory::project(vectors, spec.axes);
  const auto observed = trajectory::occupancy(proj, baseline.bins_per_axis, baseline.bounds);
  return trajectory::deviation_score(baseline, observed);
}

}  // namespace

std::optional<double> WindowReport::max_score() const {
  std::optional<double> best;
  for (const auto& s : scores) {
    if (s.score && (!best || *s.score > *best)) best = s.score;
  }
  return best;
}

std::vector<WindowReport> analyze_spec(std::span<const TimedHeaders> packets,
                                       const WindowSpec& spec,
                                       std::span<const signatures::Alert> alerts,
                                       std::int64_t t0_us) {
  validate(spec);
  const std::int64_t tau_us = parameters::tau_to_us(spec.tau);
  std::vector<WindowReport> reports;
  if (packets.empty()) return reports;

  std::int64_t t_last = packets.front().timestamp_us;
  for (const auto& p : packets) t_last = std::max(t_last, p.timestamp_us);
  const auto bins = static_cast<std::size_t>((t_last - t0_us) / tau_us) + 1;
  const std::size_t windows = (bins + spec.window_len - 1) / spec.window_len;
  const std::int64_t window_us = tau_us * static_cast<std::int64_t>(spec.window_len);

  parameters::SampleOptions opts;
  opts.aggregator = spec.aggregator;
  opts.fill = spec.fill;
  opts.t0_us = t0_us;
  std::vector<parameters::ParameterSeries> series;
  for (auto pid : spec.parameters) series.push_back(parameters::sample(packets, pid, spec.tau, opts));

  for (std::size_t w = 0; w < windows; ++w) {
    WindowReport r;
    r.label = spec.label;
    r.window_index = w;
    r.t_start_us = t0_us + static_cast<std::int64_t>(w) * window_us;
    r.t_end_us = r.t_start_us + window_us;
    for (std::size_t i = 0; i < spec.parameters.size(); ++i) {
      ParameterScore ps{spec.parameters[i], std::nullopt};
      const auto base = spec.baselines.find(spec.parameters[i]);
      if (base != spec.baselines.end()) {
        const auto& values = series[i].values;
        const std::size_t lo = std::min(values.size(), w * spec.window_len);
        const std::size_t hi = std::min(values.size(), lo + spec.window_len);
        ps.score = window_score(std::span<const double>(values).subspan(lo, hi - lo), spec,
                                base->second);
      }
      r.scores.push_back(ps);
    }
    for (const auto& a : alerts) {
      if (a.timestamp_us >= r.t_start_us && a.timestamp_us < r.t_end_us) ++r.alert_count;
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

PlanResult run_plan(std::span<const TimedHeaders> packets, std::span<const WindowSpec> specs,
                    std::span<const signatures::SignatureRule> catalog,
                    const PlanOptions& options) {
  if (specs.empty()) throw Error(ErrorCode::EmptyPlan, "plan has no window specs");
  PlanResult result;
  result.alerts = signatures::scan(catalog, packets, options.scan);

  std::int64_t t0 = 0;
  if (!packets.empty()) {
    t0 = packets.front().timestamp_us;
    for (const auto& p : packets) t0 = std::min(t0, p.timestamp_us);
  }

  std::set<std::string> seen;
  std::vector<std::optional<SpecError>> label_errors(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!seen.insert(specs[i].label).second) {
      label_errors[i] = SpecError{specs[i].label, ErrorCode::InvalidArgument,
                                  "duplicate window label '" + specs[i].label + "'"};
    }
  }

  struct Outcome {
    std::vector<WindowReport> reports;
    std::optional<SpecError> error;
  };
  auto run_one = [&](std::size_t i) {
    Outcome out;
    if (label_errors[i]) {
      out.error = label_errors[i];
      return out;
    }
    try {
      out.reports = analyze_spec(packets, specs[i], result.alerts, t0);
    } catch (const Error& e) {
      out.error = SpecError{specs[i].label, e.code(), "[" + specs[i].label + "] " + e.what()};
    }
    return out;
  };

  std::vector<Outcome> outcomes(specs.size());
  if (options.parallel && specs.size() > 1) {
    std::vector<std::future<Outcome>> futures;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      futures.push_back(std::async(std::launch::async, run_one, i));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) outcomes[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < specs.size(); ++i) outcomes[i] = run_one(i);
  }

  for (auto& o : outcomes) {
    if (o.error) {
      if (!options.partial_failure) throw Error(o.error->code, o.error->message);
      result.errors.push_back(std::move(*o.error));
      continue;
    }
    for (auto& r : o.reports) result.reports.push_back(std::move(r));
  }
  std::stable_sort(result.reports.begin(), result.reports.end(),
                   [](const WindowReport& a, const WindowReport& b) {
                     if (a.label != b.label) return a.label < b.label;
                     return a.window_index < b.window_index;
                   });
  return result;
}

trajectory::OccupancyHistogram build_baseline(std::span<const TimedHeaders> packets,
                                              const WindowSpec& spec, ParameterId parameter) {
  validate(spec);
  parameters::SampleOptions opts;
  opts.aggregator = spec.aggregator;
  opts.fill = spec.fill;
  const auto series = parameters::sample(packets, parameter, spec.tau, opts);
  const auto vectors = embedding::build_delay_vectors(series, spec.embed_dim, spec.delay);
  return trajectory::occupancy(trajectory::project(vectors, spec.axes), spec.bins_per_axis);
}

std::size_t cascade_hint(const WindowReport& short_report, double cutoff,
                         std::span<WindowReport> longer) {
  const auto score = short_report.max_score();
  if (!score || !(*score > cutoff)) return 0;
  std::size_t attached = 0;
  for (auto& r : longer) {
    if (r.label == short_report.label) continue;
    if (r.t_start_us < short_report.t_end_us && short_report.t_start_us < r.t_end_us) {
      r.hints.push_back({short_report.label, short_report.window_index, *score});
      ++attached;
    }
  }
  return attached;
}

std::optional<double> percentile_cutoff(std::span<const WindowReport> reports,
                                        const std::string& label, double percentile) {
  std::vector<double> scores;
  for (const auto& r : reports) {
    if (r.label != label) continue;
    if (auto s = r.max_score()) scores.push_back(*s);
  }
  if (scores.empty()) return std::nullopt;
  std::sort(scores.begin(), scores.end());
  const double p = std::clamp(percentile, 0.0, 100.0);
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(scores.size())));
  rank = std::clamp<std::size_t>(rank, 1, scores.size());
  return scores[rank - 1];
}

void apply_cascade(std::vector<WindowReport>& reports, std::span<const WindowSpec> specs,
                   double percentile) {
  for (const auto& short_spec : specs) {
    const auto cutoff = percentile_cutoff(reports, short_spec.label, percentile);
    if (!cutoff) continue;
    std::vector<WindowReport> shorts;
    for (const auto& r : reports) {
      if (r.label == short_spec.label) shorts.push_back(r);
    }
    for (const auto& long_spec : specs) {
      if (!(short_spec.tau < long_spec.tau)) continue;
      for (const auto& s : shorts) {
        for (auto& r : reports) {
          if (r.label == long_spec.label) cascade_hint(s, *cutoff, std::span<WindowReport>(&r, 1));
        }
      }
    }
  }
}

std::string report_to_json(const WindowReport& report) {
  nlohmann::ordered_json j;
  j["label"] = report.label;
  j["window_index"] = report.window_index;
  j["t_start_us"] = report.t_start_us;
  j["t_end_us"] = report.t_end_us;
  nlohmann::ordered_json scores = nlohmann::ordered_json::object();
  for (const auto& s : report.scores) {
    const std::string name(parameters::parameter_name(s.parameter));
    scores[name] = s.score ? nlohmann::ordered_json(*s.score) : nlohmann::ordered_json(nullptr);
  }
  j["scores"] = scores;
  j["alert_count"] = report.alert_count;
  auto hints = nlohmann::ordered_json::array();
  for (const auto& h : report.hints) {
    nlohmann::ordered_json hj;
    hj["label"] = h.label;
    hj["window_index"] = h.window_index;
    hj["score"] = h.score;
    hints.push_back(hj);
  }
  j["hints"] = hints;
  return j.dump();
}

void write_reports_jsonl(std::ostream& out, std::span<const WindowReport> reports) {
  for (const auto& r : reports) out << report_to_json(r) << '\n';
}

std::vector<WindowSpec> parse_plan(std::string_view json_text,
                                   const std::filesystem::path& base_dir) {
  std::vector<WindowSpec> specs;
  try {
    const auto plan = nlohmann::json::parse(json_text);
    if (!plan.is_array()) throw Error(ErrorCode::ParseError, "plan must be a JSON array");
    std::size_t i = 0;
    for (const auto& item : plan) {
      WindowSpec spec;
      spec.label = item.value("label", "w" + std::to_string(i));
      spec.tau = item.at("tau").get<double>();
      spec.window_len = item.at("window_len").get<std::size_t>();
      for (const auto& name : item.at("parameters")) {
        const auto pid = parameters::parse_parameter(name.get<std::string>());
        if (!pid) {
          throw Error(ErrorCode::ParseError, "unknown parameter '" + name.get<std::string>() + "'");
        }
        spec.parameters.push_back(*pid);
      }
      spec.embed_dim = item.value("dim", spec.embed_dim);
      spec.delay = item.value("delay", spec.delay);
      spec.bins_per_axis = item.value("bins", spec.bins_per_axis);
      spec.fill = item.value("fill", spec.fill);
      if (item.contains("axes")) spec.axes = item.at("axes").get<std::vector<std::size_t>>();
      if (item.contains("aggregator")) {
        const auto agg = parameters::parse_aggregator(item.at("aggregator").get<std::string>());
        if (!agg) throw Error(ErrorCode::ParseError, "unknown aggregator");
        spec.aggregator = *agg;
      }
      if (item.contains("baseline")) {
        const auto& b = item.at("baseline");
        if (b.is_string()) {
          const auto hist = trajectory::load_histogram(base_dir / b.get<std::string>());
          for (auto pid : spec.parameters) spec.baselines[pid] = hist;
        } else {
          for (const auto& [name, path] : b.items()) {
            const auto pid = parameters::parse_parameter(name);
            if (!pid) throw Error(ErrorCode::ParseError, "unknown baseline parameter '" + name + "'");
            spec.baselines[*pid] = trajectory::load_histogram(base_dir / path.get<std::string>());
          }
        }
      }
      specs.push_back(std::move(spec));
      ++i;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("plan: ") + e.what());
  }
  return specs;
}

std::vector<WindowSpec> load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str(), path.parent_path());
}

}  // namespace flowscope::multiwindow
