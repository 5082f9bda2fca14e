#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sme/config.hpp"

namespace sme {

/// Welford mean/variance accumulator; merge() combines partial results
/// (Chan et al. pairwise update) in any order.
struct RunningStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) noexcept {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStats& other) noexcept {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double total = static_cast<double>(n + other.n);
    const double delta = other.mean - mean;
    mean += delta * static_cast<double>(other.n) / total;
    m2 += other.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(other.n) / total;
    n += other.n;
  }

  /// Sample variance (n - 1 denominator); 0 for fewer than two samples.
  [[nodiscard]] double variance() const noexcept { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  [[nodiscard]] double stddev() const noexcept { return std::sqrt(variance()); }
};

/// One-sample Kolmogorov-Smirnov distance against U(0,1). Samples outside
/// [0,1] are not rejected; they simply inflate the statistic.
inline double ks_statistic(std::vector<double> samples) {
  if (samples.size() < 10) throw ValidationError("ks_statistic: need at least 10 samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i];
    const double upper = static_cast<double>(i + 1) / n - x;
    const double lower = x - static_cast<double>(i) / n;
    d = std::max({d, upper, lower});
  }
  return d;
}

/// Asymptotic critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n); alpha = 0.01
/// gives the familiar 1.628 / sqrt(n).
inline double ks_critical_value(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace sme
