#pragma once

// Runs the sample -> embed -> project -> occupancy -> deviation pipeline at
// several time scales over one packet stream.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowscope/error.hpp"
#include "flowscope/parameters.hpp"
#include "flowscope/signatures.hpp"
#include "flowscope/trajectory.hpp"

namespace flowscope::multiwindow {

using parameters::ParameterId;

struct WindowSpec {
  std::string label;
  double tau = 5.0;             // seconds per bin
  std::size_t window_len = 12;  // bins per analysis window
  std::vector<ParameterId> parameters;
  std::map<ParameterId, trajectory::OccupancyHistogram> baselines;

  std::size_t embed_dim = 3;
  std::size_t delay = 1;
  std::vector<std::size_t> axes{0, 1};
  std::size_t bins_per_axis = 20;  // used when building baselines
  parameters::Aggregator aggregator = parameters::Aggregator::Last;
  double fill = 0;
};

struct ParameterScore {
  ParameterId parameter;
  std::optional<double> score;  // absent without a baseline or with too few bins
};

struct CascadeHint {
  std::string label;
  std::size_t window_index = 0;
  double score = 0;
};

struct WindowReport {
  std::string label;
  std::size_t window_index = 0;
  std::int64_t t_start_us = 0;
  std::int64_t t_end_us = 0;
  std::vector<ParameterScore> scores;
  std::size_t alert_count = 0;
  std::vector<CascadeHint> hints;

  /// Largest defined parameter score.
  std::optional<double> max_score() const;
};

struct SpecError {
  std::string label;
  ErrorCode code;
  std::string message;
};

struct PlanOptions {
  signatures::ScanConfig scan;
  /// When false, the first failing spec aborts the run with its error.
  bool partial_failure = true;
  bool parallel = true;
};

struct PlanResult {
  std::vector<WindowReport> reports;  // ordered by (label, window_index)
  std::vector<signatures::Alert> alerts;
  std::vector<SpecError> errors;
};

/// Reports for one spec over a timestamp-ordered stream, windows tiled from
/// `t0_us`. Alerts are only counted, never generated here.
std::vector<WindowReport> analyze_spec(std::span<const parameters::TimedHeaders> packets,
                                       const WindowSpec& spec,
                                       std::span<const signatures::Alert> alerts,
                                       std::int64_t t0_us);

/// Throws Error{EmptyPlan} for an empty spec list. Per-spec failures are
/// collected in PlanResult::errors (tagged with the label) unless
/// partial_failure is off.
PlanResult run_plan(std::span<const parameters::TimedHeaders> packets,
                    std::span<const WindowSpec> specs,
                    std::span<const signatures::SignatureRule> catalog,
                    const PlanOptions& options = {});

/// Occupancy of the whole stream for one parameter under the spec's
/// embedding and projection, with data-derived bounds.
trajectory::OccupancyHistogram build_baseline(std::span<const parameters::TimedHeaders> packets,
                                              const WindowSpec& spec, ParameterId parameter);

/// Attaches a hint for `short_report` to every report in `longer` whose time
/// range overlaps it, when the short report's score exceeds `cutoff`.
/// Scores are never modified. Returns the number of hints attached.
std::size_t cascade_hint(const WindowReport& short_report, double cutoff,
                         std::span<WindowReport> longer);

/// Nearest-rank percentile of the defined scores of one label.
std::optional<double> percentile_cutoff(std::span<const WindowReport> reports,
                                        const std::string& label, double percentile);

/// For every pair of specs with tau_short < tau_long, hints the long-scale
/// reports with short windows scoring above the short label's percentile.
void apply_cascade(std::vector<WindowReport>& reports, std::span<const WindowSpec> specs,
                   double percentile);

std::string report_to_json(const WindowReport& report);
void write_reports_jsonl(std::ostream& out, std::span<const WindowReport> reports);

/// Parses a plan file: a JSON array of specs. Baseline paths are resolved
/// relative to the plan file.
std::vector<WindowSpec> load_plan(const std::filesystem::path& path);
std::vector<WindowSpec> parse_plan(std::string_view json_text,
                                   const std::filesystem::path& base_dir);

}  // namespace flowscope::multiwindow
