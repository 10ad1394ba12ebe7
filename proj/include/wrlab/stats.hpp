#pragma once

// Estimates with error bars: Wilson intervals for proportions, batch means for
// chain functionals, replicate variance for i.i.d. replicates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <limits>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "wrlab/errors.hpp"

namespace wrlab {

enum class EstimateMethod { BatchMeans, ReplicateVariance, Wilson, Exact };

inline std::string to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::BatchMeans: return "batch-means";
    case EstimateMethod::ReplicateVariance: return "replicate-variance";
    case EstimateMethod::Wilson: return "wilson";
    case EstimateMethod::Exact: return "exact";
  }
  return "unknown";
}

struct EstimateWithError {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 1;
  EstimateMethod method = EstimateMethod::Exact;
  /// Confidence bounds; for Wilson these are the interval, otherwise value ± 1.96 se.
  double lo = 0.0;
  double hi = 0.0;
  /// Lag-1 autocorrelation of the batch series (batch means only).
  double lag1_autocorrelation = 0.0;
  /// Set when a convergence diagnostic tripped.
  bool flagged = false;

  /// Symmetric normal interval value ± q·se.
  std::pair<double, double> interval(double q) const { return {value - q * std_error, value + q * std_error}; }
};

inline constexpr double kZ95 = 1.959963984540054;
inline constexpr double kZ99 = 2.5758293035489004;
inline constexpr std::size_t kMinBatches = 8;
inline constexpr double kMaxBatchAutocorrelation = 0.5;

inline EstimateWithError exact_estimate(double v) {
  EstimateWithError e;
  e.value = v;
  e.lo = e.hi = v;
  return e;
}

/// Wilson score interval for k successes out of n trials.
inline std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = kZ95) {
  if (n == 0) throw InvalidArgument("wilson interval needs n >= 1");
  if (k > n) throw InvalidArgument("wilson interval needs k <= n");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // the endpoints are exactly 0 and 1 at k = 0 and k = n
  return {k == 0 ? 0.0 : std::max(0.0, center - half), k == n ? 1.0 : std::min(1.0, center + half)};
}

inline EstimateWithError summarize_proportion(std::size_t k, std::size_t n, double z = kZ95) {
  const auto [lo, hi] = wilson_interval(k, n, z);
  EstimateWithError e;
  e.value = static_cast<double>(k) / static_cast<double>(n);
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(n));
  e.n = n;
  e.method = EstimateMethod::Wilson;
  e.lo = lo;
  e.hi = hi;
  return e;
}

inline double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

/// Mean of i.i.d. samples with standard error sd/√n.
inline EstimateWithError summarize_replicates(std::span<const double> xs) {
  if (xs.size() < 2) throw InvalidArgument("replicate variance needs at least 2 samples");
  EstimateWithError e;
  e.value = mean_of(xs);
  e.std_error = std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
  e.n = xs.size();
  e.method = EstimateMethod::ReplicateVariance;
  std::tie(e.lo, e.hi) = e.interval(kZ95);
  return e;
}

inline double lag1_autocorrelation(std::span<const double> xs) {
  if (xs.size() < 3) return 0.0;
  const double m = mean_of(xs);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    den += (xs[i] - m) * (xs[i] - m);
    if (i + 1 < xs.size()) num += (xs[i] - m) * (xs[i + 1] - m);
  }
  return den > 0.0 ? num / den : 0.0;
}

/// Means of `batch_count` contiguous equal batches; a trailing remainder is dropped.
inline std::vector<double> batch_series(std::span<const double> series, std::size_t batch_count) {
  if (batch_count < kMinBatches) throw InvalidArgument("batch means needs at least 8 batches");
  if (series.size() < batch_count) throw InvalidArgument("series shorter than the batch count");
  const std::size_t len = series.size() / batch_count;
  std::vector<double> batches(batch_count);
  for (std::size_t b = 0; b < batch_count; ++b) {
    batches[b] = mean_of(series.subspan(b * len, len));
  }
  return batches;
}

/// Batch-means estimate of the mean of a stationary series.
inline EstimateWithError summarize_batch_means(std::span<const double> series, std::size_t batch_count) {
  const auto batches = batch_series(series, batch_count);
  EstimateWithError e;
  e.value = mean_of(batches);
  e.std_error = std::sqrt(sample_variance(batches) / static_cast<double>(batch_count));
  e.n = batch_count * (series.size() / batch_count);
  e.method = EstimateMethod::BatchMeans;
  e.lag1_autocorrelation = lag1_autocorrelation(batches);
  e.flagged = e.lag1_autocorrelation > kMaxBatchAutocorrelation;
  std::tie(e.lo, e.hi) = e.interval(kZ95);
  return e;
}

/// Average of independent estimates; se combines in quadrature.
inline EstimateWithError average_estimates(std::span<const EstimateWithError> parts) {
  if (parts.empty()) throw InvalidArgument("nothing to average");
  EstimateWithError e;
  double var = 0.0;
  e.n = 0;
  for (const auto& p : parts) {
    e.value += p.value;
    var += p.std_error * p.std_error;
    e.n += p.n;
    e.flagged = e.flagged || p.flagged;
    e.lag1_autocorrelation = std::max(e.lag1_autocorrelation, p.lag1_autocorrelation);
  }
  const double k = static_cast<double>(parts.size());
  e.value /= k;
  e.std_error = std::sqrt(var) / k;
  e.method = parts.front().method;
  std::tie(e.lo, e.hi) = e.interval(kZ95);
  return e;
}

inline double combined_std_error(const EstimateWithError& a, const EstimateWithError& b) {
  return std::hypot(a.std_error, b.std_error);
}

/// |a − b| measured in combined standard errors (0 when both are exact and equal).
inline double discrepancy_in_sigmas(const EstimateWithError& a, const EstimateWithError& b) {
  const double se = combined_std_error(a, b);
  const double diff = std::abs(a.value - b.value);
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / se;
}

/// Two-sided p-value of a z statistic.
inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

inline double two_sided_t_p(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Welch two-sample test on means, normal reference distribution.
inline TestResult welch_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch test needs two samples of size >= 2");
  const double se = std::sqrt(sample_variance(a) / double(a.size()) + sample_variance(b) / double(b.size()));
  const double diff = mean_of(a) - mean_of(b);
  if (se == 0.0) return {0.0, diff == 0.0 ? 1.0 : 0.0};
  const double z = diff / se;
  return {z, two_sided_normal_p(z)};
}

/// Paired test of E[a − b] = 0 for a correlated series: batch means of the
/// differences, Student t with batch_count − 1 degrees of freedom.
inline TestResult paired_batch_test(std::span<const double> a, std::span<const double> b,
                                    std::size_t batch_count) {
  if (a.size() != b.size()) throw InvalidArgument("paired test needs equal lengths");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const auto est = summarize_batch_means(diff, batch_count);
  if (est.std_error == 0.0) return {0.0, est.value == 0.0 ? 1.0 : 0.0};
  const double t = est.value / est.std_error;
  return {t, two_sided_t_p(t, static_cast<double>(batch_count - 1))};
}

}  // namespace wrlab
