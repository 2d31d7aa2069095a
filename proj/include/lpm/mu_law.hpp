#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <variant>

#include <boost/math/special_functions/gamma.hpp>

#include "lpm/error.hpp"
#include "lpm/rng.hpp"

namespace lpm {

struct DeltaMu {
  double c = 1.0;
};

/// Uniform(a, b) with 0 < a < b.
struct UniformMu {
  double a = 0.5;
  double b = 1.5;
};

/// exp(Normal(m, s^2)).
struct LogNormalMu {
  double m = 0.0;
  double s = 1.0;
};

/// shift + Exponential(rate).
struct ShiftedExponentialMu {
  double rate = 1.0;
  double shift = 0.0;
};

/// Positively supported law with finite mean; the distribution of the Y_v
/// attached to last-generation particles.
class MuLaw {
 public:
  using Variant = std::variant<DeltaMu, UniformMu, LogNormalMu, ShiftedExponentialMu>;

  MuLaw() : law_(DeltaMu{1.0}) {}
  MuLaw(Variant law) : law_(std::move(law)) { validate(); }  // NOLINT(implicit)

  static MuLaw delta(double c = 1.0) { return MuLaw(DeltaMu{c}); }
  static MuLaw uniform(double a, double b) { return MuLaw(UniformMu{a, b}); }

  const Variant& law() const noexcept { return law_; }

  bool is_delta() const noexcept { return std::holds_alternative<DeltaMu>(law_); }
  bool is_delta_one() const noexcept { return is_delta() && std::get<DeltaMu>(law_).c == 1.0; }

  /// <mu>.
  double mean() const {
    return std::visit(
        [](const auto& l) -> double {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DeltaMu>) return l.c;
          else if constexpr (std::is_same_v<T, UniformMu>) return 0.5 * (l.a + l.b);
          else if constexpr (std::is_same_v<T, LogNormalMu>) return std::exp(l.m + 0.5 * l.s * l.s);
          else return l.shift + 1.0 / l.rate;
        },
        law_);
  }

  /// <mu>_r = E[Y^r] for r > 0.
  double moment(double r) const {
    if (!(r > 0.0)) throw InvalidMu("moment order must be positive");
    return std::visit(
        [r](const auto& l) -> double {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DeltaMu>) {
            return std::pow(l.c, r);
          } else if constexpr (std::is_same_v<T, UniformMu>) {
            return (std::pow(l.b, r + 1.0) - std::pow(l.a, r + 1.0)) / ((r + 1.0) * (l.b - l.a));
          } else if constexpr (std::is_same_v<T, LogNormalMu>) {
            return std::exp(r * l.m + 0.5 * r * r * l.s * l.s);
          } else {
            // E[(c + X)^r] = rate^{-r} e^{c rate} Gamma(r + 1, c rate)
            const double x = l.shift * l.rate;
            if (x == 0.0) return boost::math::tgamma(r + 1.0) * std::pow(l.rate, -r);
            return std::pow(l.rate, -r) * std::exp(x) * boost::math::tgamma(r + 1.0, x);
          }
        },
        law_);
  }

  /// log Y for one draw Y ~ mu. Delta laws consume no randomness.
  double sample_log(RngStream& rng) const {
    return std::visit(
        [&rng](const auto& l) -> double {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DeltaMu>) return std::log(l.c);
          else if constexpr (std::is_same_v<T, UniformMu>) return std::log(l.a + (l.b - l.a) * rng.uniform01());
          else if constexpr (std::is_same_v<T, LogNormalMu>) return l.m + l.s * rng.normal();
          else return std::log(l.shift + rng.exponential() / l.rate);
        },
        law_);
  }

  double sample(RngStream& rng) const { return std::exp(sample_log(rng)); }

  std::string describe() const {
    auto g = [](double x) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", x);
      return std::string(buf);
    };
    return std::visit(
        [&g](const auto& l) -> std::string {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DeltaMu>) return "delta(" + g(l.c) + ")";
          else if constexpr (std::is_same_v<T, UniformMu>) return "uniform(" + g(l.a) + "," + g(l.b) + ")";
          else if constexpr (std::is_same_v<T, LogNormalMu>) return "lognormal(" + g(l.m) + "," + g(l.s) + ")";
          else return "exponential(" + g(l.rate) + ")+" + g(l.shift);
        },
        law_);
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DeltaMu>) {
            if (!(l.c > 0.0) || !std::isfinite(l.c)) throw InvalidMu("delta mass must sit at c > 0");
          } else if constexpr (std::is_same_v<T, UniformMu>) {
            if (!(l.a > 0.0 && l.a < l.b) || !std::isfinite(l.b)) {
              throw InvalidMu("uniform mu needs 0 < a < b < inf");
            }
          } else if constexpr (std::is_same_v<T, LogNormalMu>) {
            if (!std::isfinite(l.m) || !std::isfinite(l.s) || l.s < 0.0) {
              throw InvalidMu("lognormal mu needs finite m and s >= 0");
            }
          } else {
            if (!(l.rate > 0.0) || !std::isfinite(l.rate) || !(l.shift >= 0.0) || !std::isfinite(l.shift)) {
              throw InvalidMu("shifted exponential mu needs rate > 0 and shift >= 0");
            }
          }
        },
        law_);
  }

  Variant law_;
};

}  // namespace lpm
