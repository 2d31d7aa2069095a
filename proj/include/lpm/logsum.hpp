#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace lpm {

/// Streaming accumulator for log(sum_i exp(x_i)). Keeps the running maximum
/// exponent and the sum scaled by exp(-max).
class LogSumAccumulator {
 public:
  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
    ++count_;
  }

  void merge(const LogSumAccumulator& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    if (other.max_ <= max_) {
      sum_ += other.sum_ * std::exp(other.max_ - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - other.max_) + other.sum_;
      max_ = other.max_;
    }
    count_ += other.count_;
  }

  /// log of the accumulated sum; -inf when empty.
  double log_value() const {
    if (count_ == 0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(sum_);
  }

  double max_exponent() const noexcept { return max_; }
  double scaled_sum() const noexcept { return sum_; }
  std::size_t count() const noexcept { return count_; }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

struct SignedLog {
  int sign = 0;  // -1, 0 or +1
  double log_abs = -std::numeric_limits<double>::infinity();

  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }
};

/// Accumulates sum_i c_i exp(x_i) with real coefficients c_i of either sign.
/// Positive and negative terms go to separate shifted sums which are
/// differenced once at extraction.
class SignedLogSumAccumulator {
 public:
  // Adds coefficient * exp(exponent).
  void add(double coefficient, double exponent) {
    if (coefficient > 0.0) {
      positive_.add(exponent + std::log(coefficient));
    } else if (coefficient < 0.0) {
      negative_.add(exponent + std::log(-coefficient));
    }
  }

  SignedLog value() const {
    const double lp = positive_.log_value();
    const double ln = negative_.log_value();
    if (lp == ln) return {};
    const int sign = lp > ln ? 1 : -1;
    const double hi = std::max(lp, ln);
    const double lo = std::min(lp, ln);
    // log(e^hi - e^lo) = hi + log1p(-e^{lo-hi})
    return {sign, hi + std::log1p(-std::exp(lo - hi))};
  }

  const LogSumAccumulator& positive() const noexcept { return positive_; }
  const LogSumAccumulator& negative() const noexcept { return negative_; }

 private:
  LogSumAccumulator positive_;
  LogSumAccumulator negative_;
};

/// Two-pass log-sum-exp over a contiguous range.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// log sum_i exp(scale * xs[i] + offset) in two passes.
inline double log_sum_exp_affine(std::span<const double> xs, double scale, double offset = 0.0) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double shift = std::max(scale * *lo, scale * *hi);
  double s = 0.0;
  for (double x : xs) s += std::exp(scale * x - shift);
  return shift + std::log(s) + offset;
}

}  // namespace lpm
