#include "flowscope/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "flowscope/error.hpp"
#include "flowscope/text_io.hpp"

namespace flowscope::trajectory {
namespace {

std::size_t cell_count(std::size_t bins, std::size_t width) {
  std::size_t cells = 1;
  for (std::size_t i = 0; i < width; ++i) cells *= bins;
  return cells;
}

std::size_t axis_cell(double x, const AxisBounds& b, std::size_t bins) {
  const double t = (x - b.min) / (b.max - b.min) * static_cast<double>(bins);
  if (!(t > 0)) return 0;  // also catches NaN
  const double last = static_cast<double>(bins - 1);
  return static_cast<std::size_t>(std::min(std::floor(t), last));
}

}  // namespace

Projection project(const embedding::DelayVectorSet& vectors, std::span<const std::size_t> axes) {
  if (axes.size() != 2 && axes.size() != 3) {
    throw Error(ErrorCode::BadAxes, "projection needs 2 or 3 axes, got " +
                                        std::to_string(axes.size()));
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= vectors.dim()) {
      throw Error(ErrorCode::BadAxes, "axis " + std::to_string(axes[i]) +
                                          " out of range for dimension " +
                                          std::to_string(vectors.dim()));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (axes[i] == axes[j]) {
        throw Error(ErrorCode::BadAxes, "duplicate axis " + std::to_string(axes[i]));
      }
    }
  }
  Projection p;
  p.axes.assign(axes.begin(), axes.end());
  p.points.reserve(vectors.size() * axes.size());
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    for (auto a : axes) p.points.push_back(vectors.at(m, a));
  }
  return p;
}

double OccupancyHistogram::total_mass() const noexcept {
  return std::accumulate(mass.begin(), mass.end(), 0.0);
}

OccupancyHistogram occupancy(const Projection& projection, std::size_t bins_per_axis,
                             std::optional<std::vector<AxisBounds>> bounds) {
  const std::size_t width = projection.width();
  if (bins_per_axis < 2) throw Error(ErrorCode::BadBounds, "bins_per_axis must be >= 2");
  if (width == 0) throw Error(ErrorCode::BadAxes, "projection has no axes");

  OccupancyHistogram h;
  h.axes = projection.axes;
  h.bins_per_axis = bins_per_axis;
  if (bounds) {
    if (bounds->size() != width) {
      throw Error(ErrorCode::BadBounds, "expected " + std::to_string(width) + " axis bounds");
    }
    for (const auto& b : *bounds) {
      if (!(b.min < b.max)) {
        throw Error(ErrorCode::BadBounds, "axis bounds need min < max, got [" +
                                              text::format_double(b.min) + ", " +
                                              text::format_double(b.max) + "]");
      }
    }
    h.bounds = std::move(*bounds);
  } else {
    h.bounds.assign(width, AxisBounds{0, 1});
    if (projection.size() > 0) {
      for (std::size_t a = 0; a < width; ++a) {
        double lo = projection[0][a];
        double hi = lo;
        for (std::size_t m = 1; m < projection.size(); ++m) {
          lo = std::min(lo, projection[m][a]);
          hi = std::max(hi, projection[m][a]);
        }
        if (lo == hi) {
          lo -= 0.5;
          hi += 0.5;
        }
        h.bounds[a] = {lo, hi};
      }
    }
  }

  h.mass.assign(cell_count(bins_per_axis, width), 0.0);
  const std::size_t M = projection.size();
  if (M == 0) return h;
  std::vector<std::size_t> hits(h.mass.size(), 0);
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t cell = 0;
    std::size_t stride = 1;
    for (std::size_t a = 0; a < width; ++a) {
      cell += axis_cell(projection[m][a], h.bounds[a], bins_per_axis) * stride;
      stride *= bins_per_axis;
    }
    ++hits[cell];
  }
  for (std::size_t c = 0; c < hits.size(); ++c) {
    h.mass[c] = static_cast<double>(hits[c]) / static_cast<double>(M);
  }
  return h;
}

double deviation_score(const OccupancyHistogram& baseline, const OccupancyHistogram& observed) {
  if (baseline.axes != observed.axes || baseline.bounds != observed.bounds ||
      baseline.bins_per_axis != observed.bins_per_axis ||
      baseline.mass.size() != observed.mass.size()) {
    throw Error(ErrorCode::IncompatibleHistograms,
                "histograms differ in axes, bounds or bins_per_axis");
  }
  double score = 0;
  for (std::size_t c = 0; c < baseline.mass.size(); ++c) {
    score += std::abs(baseline.mass[c] - observed.mass[c]);
  }
  return std::min(score, 2.0);
}

void write_projection_csv(std::ostream& out, const Projection& projection) {
  static constexpr const char* kNames[] = {"x", "y", "z"};
  out << "t_index";
  for (std::size_t a = 0; a < projection.width(); ++a) out << ',' << kNames[a];
  out << '\n';
  for (std::size_t m = 0; m < projection.size(); ++m) {
    out << m;
    for (double v : projection[m]) out << ',' << text::format_double(v);
    out << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const OccupancyHistogram& hist) {
  out << "cell_index,mass\n";
  for (std::size_t c = 0; c < hist.mass.size(); ++c) {
    out << c << ',' << text::format_double(hist.mass[c]) << '\n';
  }
}

std::filesystem::path save_histogram(const OccupancyHistogram& hist,
                                     const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto json_path = stem;
  json_path += ".json";
  {
    std::ofstream out(csv_path);
    if (!out) throw Error(ErrorCode::WriteFailure, "cannot open " + csv_path.string());
    write_histogram_csv(out, hist);
  }
  nlohmann::ordered_json j;
  j["axes"] = hist.axes;
  auto bounds = nlohmann::ordered_json::array();
  for (const auto& b : hist.bounds) bounds.push_back({b.min, b.max});
  j["bounds"] = bounds;
  j["bins_per_axis"] = hist.bins_per_axis;
  j["cell_order"] = "axis0_fastest";
  j["cells_csv"] = csv_path.filename().string();
  std::ofstream out(json_path);
  if (!out) throw Error(ErrorCode::WriteFailure, "cannot open " + json_path.string());
  out << j.dump(2) << '\n';
  return json_path;
}

OccupancyHistogram load_histogram(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + sidecar.string());
  OccupancyHistogram h;
  std::string cells_csv;
  try {
    const auto j = nlohmann::json::parse(in);
    h.axes = j.at("axes").get<std::vector<std::size_t>>();
    for (const auto& b : j.at("bounds")) h.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    h.bins_per_axis = j.at("bins_per_axis").get<std::size_t>();
    cells_csv = j.at("cells_csv").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar.string() + ": " + e.what());
  }
  if (h.bounds.size() != h.axes.size() || h.bins_per_axis < 2) {
    throw Error(ErrorCode::ParseError, sidecar.string() + ": inconsistent histogram shape");
  }
  const auto csv_path = sidecar.parent_path() / cells_csv;
  std::ifstream csv(csv_path);
  if (!csv) throw Error(ErrorCode::IoError, "cannot open " + csv_path.string());
  h.mass.assign(cell_count(h.bins_per_axis, h.axes.size()), 0.0);
  for (const auto& row : text::read_csv(csv, "cell_index,mass")) {
    const auto idx = text::parse_int(row[0]);
    if (idx < 0 || static_cast<std::size_t>(idx) >= h.mass.size()) {
      throw Error(ErrorCode::ParseError, "cell index out of range in " + csv_path.string());
    }
    h.mass[static_cast<std::size_t>(idx)] = text::parse_double(row[1]);
  }
  return h;
}

}  // namespace flowscope::trajectory
