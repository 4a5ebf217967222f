#pragma once

// Delay-coordinate embedding of a scalar series and the false nearest
// neighbors (FNN) test used to pick an embedding dimension.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "flowscope/parameters.hpp"

namespace flowscope::embedding {

struct EmbeddingConfig {
  std::size_t delay = 1;      // samples between successive components
  std::size_t max_dim = 12;   // largest dimension probed by fnn_curve
  double r_tol = 15.0;        // distance-growth threshold
  double a_tol = 2.0;         // attractor-size threshold, in units of the series std
  std::size_t theiler_w = 1;  // neighbors must satisfy |m - m'| > theiler_w

  /// Throws Error{InvalidArgument} when a field is out of range.
  void validate() const;
};

/// M = N - (dim-1)*delay vectors stored row-major; component k of vector m is
/// s(m + k*delay).
class DelayVectorSet {
 public:
  DelayVectorSet(std::size_t dim, std::size_t delay, std::size_t source_len,
                 std::vector<double> data);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t delay() const noexcept { return delay_; }
  std::size_t source_len() const noexcept { return source_len_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }

  std::span<const double> operator[](std::size_t m) const noexcept {
    return {data_.data() + m * dim_, dim_};
  }
  double at(std::size_t m, std::size_t k) const noexcept { return data_[m * dim_ + k]; }

 private:
  std::size_t dim_;
  std::size_t delay_;
  std::size_t source_len_;
  std::vector<double> data_;
};

/// Throws Error{SeriesTooShort} when N < (dim-1)*delay + 1.
DelayVectorSet build_delay_vectors(std::span<const double> series, std::size_t dim,
                                   std::size_t delay);
DelayVectorSet build_delay_vectors(const parameters::ParameterSeries& series, std::size_t dim,
                                   std::size_t delay);

struct FnnCount {
  std::size_t false_count = 0;
  std::size_t tested_count = 0;

  std::optional<double> fraction() const noexcept {
    if (tested_count == 0) return std::nullopt;
    return static_cast<double>(false_count) / static_cast<double>(tested_count);
  }
};

/// False-neighbor count at dimension `dim`. Every point m < N - dim*delay is
/// tested against its nearest neighbor (Euclidean, lowest index on ties, outside
/// the Theiler window). The pair is false when the added component grows the
/// distance by more than r_tol, or when the (dim+1)-distance exceeds a_tol
/// standard deviations of the series.
///
/// Throws Error{SeriesTooShort} when N < dim*delay + 1 and
/// Error{DegenerateSeries} for a constant series.
FnnCount fnn_fraction(std::span<const double> series, std::size_t dim,
                      const EmbeddingConfig& config);

struct FnnCurve {
  /// Index d-1 holds dimension d; nullopt when fewer than kMinVectors points
  /// could be tested.
  std::vector<std::optional<double>> fractions;
  std::vector<FnnCount> counts;

  static constexpr std::size_t kMinVectors = 10;

  std::size_t max_dim() const noexcept { return fractions.size(); }
  std::optional<double> fraction(std::size_t dim) const noexcept {
    return dim >= 1 && dim <= fractions.size() ? fractions[dim - 1] : std::nullopt;
  }
};

FnnCurve fnn_curve(std::span<const double> series, const EmbeddingConfig& config);

/// Smallest dimension whose defined fraction is <= threshold.
std::optional<std::size_t> estimate_dimension(const FnnCurve& curve, double threshold);

/// First lag at which the autocorrelation drops below 1/e, clamped to
/// [1, max(1, N/10)].
std::size_t default_delay(std::span<const double> series);

/// CSV `d,fraction,false_count,tested_count`; undefined fractions are blank.
void write_fnn_csv(std::ostream& out, const FnnCurve& curve);
FnnCurve read_fnn_csv(std::istream& in);

}  // namespace flowscope::embedding
