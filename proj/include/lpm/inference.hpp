#pragma once

// Turning samples into pass/fail evidence: Kolmogorov-Smirnov tests with
// asymptotic p-values, moment fits of the Gumbel law, least-squares slopes in
// log n, and the exponential-spacing test for unit-rate Poisson points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/report.hpp"

namespace lpm {

inline constexpr double kDefaultAlpha = 1e-3;
inline constexpr double kEulerGamma = 0.57721566490153286061;

// ---------------------------------------------------------------------------
// Descriptive statistics

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw TooFewSamples(0, 1);
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw TooFewSamples(xs.size(), 2);
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw TooFewSamples(0, 1);
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::span<const double> xs) { return quantile(xs, 0.5); }

// ---------------------------------------------------------------------------
// Distribution functions

using Cdf = std::function<double(double)>;

inline Cdf gumbel_cdf(double location = 0.0, double scale = 1.0) {
  return [location, scale](double x) { return std::exp(-std::exp(-(x - location) / scale)); };
}

inline Cdf exponential_cdf(double rate = 1.0) {
  return [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); };
}

/// Survival function of the Kolmogorov distribution,
/// Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2), terms dropped below 1e-12.
/// For small x the equivalent theta-function form
/// 1 - sqrt(2 pi)/x sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 x^2)) is summed instead,
/// because the alternating series converges slowly there.
inline double kolmogorov_survival(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.0) {
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double j = 2.0 * k - 1.0;
      const double term = std::exp(-j * j * c);
      s += term;
      if (term < 1e-12 * s || term == 0.0) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

inline constexpr std::size_t kMinKsSamples = 8;

/// One-sample KS test of `samples` against a continuous CDF.
inline TestReport ks_one_sample(std::span<const double> samples, const Cdf& cdf, std::string name = "ks_one_sample",
                                double alpha = kDefaultAlpha) {
  if (samples.size() < kMinKsSamples) throw TooFewSamples(samples.size(), kMinKsSamples);
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  const double m = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, f - static_cast<double>(i) / m, static_cast<double>(i + 1) / m - f});
  }
  TestReport r;
  r.name = std::move(name);
  r.statistic = d;
  r.p_value = kolmogorov_survival(std::sqrt(m) * d);
  r.sample_sizes = {v.size()};
  r.alpha = alpha;
  r.pass = *r.p_value >= alpha;
  return r;
}

/// Two-sample KS test; p-value from the Kolmogorov series at sqrt(mn/(m+n)) D.
inline TestReport ks_two_sample(std::span<const double> a, std::span<const double> b,
                                std::string name = "ks_two_sample", double alpha = kDefaultAlpha) {
  if (a.size() < kMinKsSamples) throw TooFewSamples(a.size(), kMinKsSamples);
  if (b.size() < kMinKsSamples) throw TooFewSamples(b.size(), kMinKsSamples);
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t) ++i;
    while (j < y.size() && y[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n));
  }
  TestReport r;
  r.name = std::move(name);
  r.statistic = d;
  r.p_value = kolmogorov_survival(std::sqrt(m * n / (m + n)) * d);
  r.sample_sizes = {x.size(), y.size()};
  r.alpha = alpha;
  r.pass = *r.p_value >= alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Gumbel fit

struct GumbelFit {
  double location = 0.0;
  double scale = 1.0;
  TestReport report;  // KS against the fitted law
};

/// Moment estimator: scale = s sqrt(6)/pi, location = mean - gamma_E scale.
inline GumbelFit fit_gumbel(std::span<const double> samples, std::string name = "gumbel_fit",
                            double alpha = kDefaultAlpha) {
  constexpr std::size_t kMin = 100;
  if (samples.size() < kMin) throw TooFewSamples(samples.size(), kMin);
  const double m = mean(samples);
  const double s = std::sqrt(sample_variance(samples));
  if (!(s > 0.0)) throw NumericFailure("gumbel fit on a degenerate sample (zero variance)");
  GumbelFit fit;
  fit.scale = s * std::sqrt(6.0) / std::numbers::pi;
  fit.location = m - kEulerGamma * fit.scale;
  fit.report = ks_one_sample(samples, gumbel_cdf(fit.location, fit.scale), std::move(name), alpha);
  fit.report.params["location"] = fit.location;
  fit.report.params["scale"] = fit.scale;
  return fit;
}

// ---------------------------------------------------------------------------
// Log-correction slope

/// value ~ intercept + slope * log n.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double residual_variance = 0.0;
  std::size_t points = 0;
  double target = 0.0;
};

/// Ordinary least squares of central values against log n. The caller removes
/// the linear drift first; `target` is the slope the regime predicts.
inline SlopeFit fit_log_correction(const std::map<int, double>& points, double target) {
  constexpr std::size_t kMinPoints = 4;
  if (points.size() < kMinPoints) throw TooFewPoints(points.size(), kMinPoints);
  const double k = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [n, y] : points) {
    if (n < 1) throw OutOfDomain("log-correction fit needs n >= 1");
    mx += std::log(static_cast<double>(n));
    my += y;
  }
  mx /= k;
  my /= k;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [n, y] : points) {
    const double dx = std::log(static_cast<double>(n)) - mx;
    sxx += dx * dx;
    sxy += dx * (y - my);
  }
  SlopeFit fit;
  fit.points = points.size();
  fit.target = target;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (const auto& [n, y] : points) {
    const double r = y - fit.intercept - fit.slope * std::log(static_cast<double>(n));
    ssr += r * r;
  }
  fit.residual_variance = ssr / (k - 2.0);
  fit.slope_se = std::sqrt(fit.residual_variance / sxx);
  return fit;
}

// ---------------------------------------------------------------------------
// Spacings

/// Gaps v_1, v_2 - v_1, ..., v_k - v_{k-1} of the first k values of each
/// ascending sequence, pooled.
inline std::vector<double> pooled_spacings(std::span<const std::vector<double>> sequences, std::size_t k) {
  std::vector<double> gaps;
  gaps.reserve(sequences.size() * k);
  for (const auto& seq : sequences) {
    const std::size_t m = std::min(k, seq.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      gaps.push_back(seq[i] - prev);
      prev = seq[i];
    }
  }
  return gaps;
}

/// KS test of pooled spacings against Exponential(1). Order statistics of a
/// unit-rate Poisson process have i.i.d. Exp(1) spacings.
inline TestReport spacing_exponentiality(std::span<const std::vector<double>> sequences, std::size_t k,
                                         std::string name = "spacing_exponentiality",
                                         double alpha = kDefaultAlpha) {
  if (k < 2) throw TooFewSamples(k, 2);
  const auto gaps = pooled_spacings(sequences, k);
  auto r = ks_one_sample(gaps, exponential_cdf(1.0), std::move(name), alpha);
  r.params["k"] = static_cast<double>(k);
  r.params["replications"] = static_cast<double>(sequences.size());
  return r;
}

}  // namespace lpm
