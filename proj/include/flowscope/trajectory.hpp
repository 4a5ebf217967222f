#pragma once

// Low-dimensional projections of an embedded trajectory, their occupancy
// histograms, and the L1 deviation between two histograms.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowscope/embedding.hpp"

namespace flowscope::trajectory {

struct Projection {
  std::vector<std::size_t> axes;
  std::vector<double> points;  // row-major, size() x axes.size()

  std::size_t width() const noexcept { return axes.size(); }
  std::size_t size() const noexcept { return axes.empty() ? 0 : points.size() / axes.size(); }
  std::span<const double> operator[](std::size_t m) const noexcept {
    return {points.data() + m * axes.size(), axes.size()};
  }
};

/// Copies the selected components of every vector, preserving order.
/// Throws Error{BadAxes} unless axes are 2 or 3 distinct indices < dim.
Projection project(const embedding::DelayVectorSet& vectors, std::span<const std::size_t> axes);

struct AxisBounds {
  double min = 0;
  double max = 0;
  bool operator==(const AxisBounds&) const = default;
};

struct OccupancyHistogram {
  std::vector<std::size_t> axes;
  std::vector<AxisBounds> bounds;
  std::size_t bins_per_axis = 0;
  /// bins_per_axis^axes.size() cells; axis 0 varies fastest.
  std::vector<double> mass;

  double total_mass() const noexcept;
};

/// Normalized cell occupancy. Default bounds are the per-axis data range
/// (widened by 0.5 on each side when the range is a single value). Points
/// outside fixed bounds are clipped into the nearest edge cell.
/// Throws Error{BadBounds} for bins < 2, a bounds list of the wrong arity,
/// or any axis with min >= max.
OccupancyHistogram occupancy(const Projection& projection, std::size_t bins_per_axis,
                             std::optional<std::vector<AxisBounds>> bounds = std::nullopt);

/// Sum of |baseline - observed| over cells, in [0, 2].
/// Throws Error{IncompatibleHistograms} unless axes, bounds and bin counts match.
double deviation_score(const OccupancyHistogram& baseline, const OccupancyHistogram& observed);

/// CSV `t_index,x,y[,z]`.
void write_projection_csv(std::ostream& out, const Projection& projection);
/// CSV `cell_index,mass`.
void write_histogram_csv(std::ostream& out, const OccupancyHistogram& hist);

/// Writes `<stem>.csv` and the `<stem>.json` sidecar (axes, bounds, bins and
/// the CSV file name). Returns the sidecar path.
std::filesystem::path save_histogram(const OccupancyHistogram& hist,
                                     const std::filesystem::path& stem);
/// Loads a histogram from its JSON sidecar.
OccupancyHistogram load_histogram(const std::filesystem::path& sidecar);

}  // namespace flowscope::trajectory
