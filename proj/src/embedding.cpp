#include "flowscope/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "flowscope/error.hpp"
#include "flowscope/text_io.hpp"

namespace flowscope::embedding {
namespace {

bool is_constant(std::span<const double> s) {
  return std::adjacent_find(s.begin(), s.end(), std::not_equal_to<>()) == s.end();
}

double population_std(std::span<const double> s) {
  double mean = 0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double ss = 0;
  for (double v : s) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(s.size()));
}

}  // namespace

void EmbeddingConfig::validate() const {
  if (delay < 1) throw Error(ErrorCode::InvalidArgument, "delay must be >= 1");
  if (max_dim < 2) throw Error(ErrorCode::InvalidArgument, "max_dim must be >= 2");
  if (!(r_tol > 1)) throw Error(ErrorCode::InvalidArgument, "r_tol must be > 1");
  if (!(a_tol > 0)) throw Error(ErrorCode::InvalidArgument, "a_tol must be > 0");
}

DelayVectorSet::DelayVectorSet(std::size_t dim, std::size_t delay, std::size_t source_len,
                               std::vector<double> data)
    : dim_(dim), delay_(delay), source_len_(source_len), data_(std::move(data)) {}

DelayVectorSet build_delay_vectors(std::span<const double> series, std::size_t dim,
                                   std::size_t delay) {
  if (dim < 1 || delay < 1) {
    throw Error(ErrorCode::InvalidArgument, "dimension and delay must be >= 1");
  }
  const std::size_t span_len = (dim - 1) * delay;
  if (series.size() < span_len + 1) {
    throw Error(ErrorCode::SeriesTooShort,
                "need at least " + std::to_string(span_len + 1) + " samples for d=" +
                    std::to_string(dim) + ", T=" + std::to_string(delay) + ", have " +
                    std::to_string(series.size()));
  }
  const std::size_t count = series.size() - span_len;
  std::vector<double> data;
  data.reserve(count * dim);
  for (std::size_t m = 0; m < count; ++m) {
    for (std::size_t k = 0; k < dim; ++k) data.push_back(series[m + k * delay]);
  }
  return DelayVectorSet(dim, delay, series.size(), std::move(data));
}

DelayVectorSet build_delay_vectors(const parameters::ParameterSeries& series, std::size_t dim,
                                   std::size_t delay) {
  return build_delay_vectors(std::span<const double>(series.values), dim, delay);
}

FnnCount fnn_fraction(std::span<const double> s, std::size_t dim, const EmbeddingConfig& config) {
  config.validate();
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 1");
  const std::size_t T = config.delay;
  const std::size_t lead = dim * T;  // offset of the extra component
  if (s.size() < lead + 1) {
    throw Error(ErrorCode::SeriesTooShort,
                "need at least " + std::to_string(lead + 1) + " samples to test d=" +
                    std::to_string(dim) + " at T=" + std::to_string(T) + ", have " +
                    std::to_string(s.size()));
  }
  if (is_constant(s)) throw Error(ErrorCode::DegenerateSeries, "series is constant");
  const double sigma = population_std(s);

  const std::size_t M = s.size() - lead;
  FnnCount result;
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t best = M;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t gap = j > m ? j - m : m - j;
      if (gap <= config.theiler_w) continue;
      double d2 = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = s[m + k * T] - s[j + k * T];
        d2 += diff * diff;
        if (d2 >= best_d2) break;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    if (best == M) continue;

    ++result.tested_count;
    const double extra = s[m + lead] - s[best + lead];
    const double grow = std::abs(extra);
    const double dist = std::sqrt(best_d2);
    const bool ratio_false = dist > 0 ? grow / dist > config.r_tol : grow > 0;
    const bool size_false = std::sqrt(best_d2 + extra * extra) / sigma > config.a_tol;
    if (ratio_false || size_false) ++result.false_count;
  }
  return result;
}

FnnCurve fnn_curve(std::span<const double> series, const EmbeddingConfig& config) {
  config.validate();
  const std::size_t N = series.size();
  auto supported = [&](std::size_t d) {
    return N >= d * config.delay + 1 && N - d * config.delay >= FnnCurve::kMinVectors;
  };
  if (!supported(1)) {
    throw Error(ErrorCode::SeriesTooShort,
                "series of length " + std::to_string(N) + " cannot support d=1 at T=" +
                    std::to_string(config.delay));
  }
  FnnCurve curve;
  curve.fractions.resize(config.max_dim);
  curve.counts.resize(config.max_dim);
  for (std::size_t d = 1; d <= config.max_dim; ++d) {
    if (!supported(d)) continue;
    curve.counts[d - 1] = fnn_fraction(series, d, config);
    curve.fractions[d - 1] = curve.counts[d - 1].fraction();
  }
  return curve;
}

std::optional<std::size_t> estimate_dimension(const FnnCurve& curve, double threshold) {
  if (!(threshold > 0 && threshold < 1)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
  }
  for (std::size_t d = 1; d <= curve.max_dim(); ++d) {
    const auto f = curve.fraction(d);
    if (f && *f <= threshold) return d;
  }
  return std::nullopt;
}

std::size_t default_delay(std::span<const double> series) {
  const std::size_t N = series.size();
  const std::size_t cap = std::max<std::size_t>(1, N / 10);
  if (N < 2 || is_constant(series)) return 1;
  double mean = 0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(N);
  double var = 0;
  for (double v : series) var += (v - mean) * (v - mean);
  const double cutoff = std::exp(-1.0);
  for (std::size_t lag = 1; lag <= cap; ++lag) {
    double c = 0;
    for (std::size_t i = 0; i + lag < N; ++i) c += (series[i] - mean) * (series[i + lag] - mean);
    if (c / var < cutoff) return lag;
  }
  return cap;
}

void write_fnn_csv(std::ostream& out, const FnnCurve& curve) {
  out << "d,fraction,false_count,tested_count\n";
  for (std::size_t d = 1; d <= curve.max_dim(); ++d) {
    const auto& c = curve.counts[d - 1];
    const auto f = curve.fractions[d - 1];
    out << d << ',' << (f ? text::format_double(*f) : std::string()) << ',' << c.false_count
        << ',' << c.tested_count << '\n';
  }
}

FnnCurve read_fnn_csv(std::istream& in) {
  FnnCurve curve;
  for (const auto& row : text::read_csv(in, "d,fraction,false_count,tested_count")) {
    FnnCount c;
    c.false_count = static_cast<std::size_t>(text::parse_int(row[2]));
    c.tested_count = static_cast<std::size_t>(text::parse_int(row[3]));
    curve.counts.push_back(c);
    curve.fractions.push_back(row[1].empty() ? std::nullopt
                                             : std::optional<double>(text::parse_double(row[1])));
  }
  return curve;
}

}  // namespace flowscope::embedding
