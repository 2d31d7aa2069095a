#pragma once

// Branching point-process families and their cumulant machinery: the log
// moment generating function nu(theta) = log E[sum_j exp(theta xi_j)], its
// derivatives, the tangency point theta0 and the tilted variance sigma^2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/random/poisson_distribution.hpp>

#include "lpm/error.hpp"
#include "lpm/logsum.hpp"
#include "lpm/report.hpp"
#include "lpm/rng.hpp"

namespace lpm {

// ---------------------------------------------------------------------------
// Offspring and displacement laws

/// Every particle has exactly `count` children.
struct FixedOffspring {
  int count = 2;
};

/// Poisson(lambda) conditioned on N >= 1.
struct PoissonAtLeastOne {
  double lambda = 1.0;
};

/// Geometric on {1, 2, ...}: P(N = k) = (1-p)^{k-1} p.
struct GeometricAtLeastOne {
  double p = 0.5;
};

/// Unconditioned Poisson(lambda). Representable so that configurations using it
/// can be rejected with a precise message; it always violates (A2).
struct PoissonOffspring {
  double lambda = 1.0;
};

using OffspringLaw =
    std::variant<FixedOffspring, PoissonAtLeastOne, GeometricAtLeastOne, PoissonOffspring>;

struct GaussianDisplacement {
  double mean = 0.0;
  double variance = 1.0;
};

struct UniformDisplacement {
  double lo = 0.0;
  double hi = 1.0;
};

/// Takes value `a` with probability p and `c` otherwise.
struct TwoPointDisplacement {
  double p = 0.5;
  double a = 1.0;
  double c = -1.0;
};

using DisplacementLaw =
    std::variant<GaussianDisplacement, UniformDisplacement, TwoPointDisplacement>;

/// Z places N i.i.d. displacements, N independent of them.
struct IidProduct {
  OffspringLaw offspring;
  DisplacementLaw displacement;
};

/// Z is a fixed finite set of atoms.
struct DeterministicAtoms {
  std::vector<double> atoms;
};

struct ModelSpec {
  std::variant<IidProduct, DeterministicAtoms> family;
};

struct AnalyticCumulant {};

/// Monte Carlo cumulant over a fixed set of `mc_samples` realizations of Z drawn
/// once from `seed`; derivatives by central differences with step
/// diff_step * max(1, |theta|).
struct NumericCumulant {
  std::size_t mc_samples = 100000;
  double diff_step = 1e-4;
  std::uint64_t seed = 0x5eed;
};

using CumulantMode = std::variant<AnalyticCumulant, NumericCumulant>;

// ---------------------------------------------------------------------------
// Sampling

inline int sample_offspring(const FixedOffspring& law, RngStream&) { return law.count; }

inline int sample_offspring(const PoissonAtLeastOne& law, RngStream& rng) {
  const double lambda = law.lambda;
  if (lambda > 30.0) {
    boost::random::poisson_distribution<int, double> poisson(lambda);
    int k = 0;
    while (k == 0) k = poisson(rng);
    return k;
  }
  // Inversion over the conditional pmf p_k = e^{-l} l^k / (k! (1 - e^{-l})), k >= 1.
  const double u = rng.uniform01();
  double pk = lambda * std::exp(-lambda) / -std::expm1(-lambda);
  double cdf = pk;
  int k = 1;
  while (u > cdf && pk > 0.0) {
    ++k;
    pk *= lambda / k;
    cdf += pk;
  }
  return k;
}

inline int sample_offspring(const GeometricAtLeastOne& law, RngStream& rng) {
  return 1 + static_cast<int>(std::floor(std::log(rng.uniform01()) / std::log1p(-law.p)));
}

inline int sample_offspring(const PoissonOffspring& law, RngStream& rng) {
  boost::random::poisson_distribution<int, double> poisson(law.lambda);
  return poisson(rng);
}

inline double sample_displacement(const GaussianDisplacement& law, RngStream& rng) {
  return law.mean + std::sqrt(law.variance) * rng.normal();
}

inline double sample_displacement(const UniformDisplacement& law, RngStream& rng) {
  return law.lo + (law.hi - law.lo) * rng.uniform01();
}

inline double sample_displacement(const TwoPointDisplacement& law, RngStream& rng) {
  return rng.uniform01() < law.p ? law.a : law.c;
}

/// Appends one realization of Z (its atoms, in draw order) to `out`.
/// Offspring count first, then the displacements.
inline void draw_point_process(const ModelSpec& spec, RngStream& rng, std::vector<double>& out) {
  if (const auto* fixed = std::get_if<DeterministicAtoms>(&spec.family)) {
    out.insert(out.end(), fixed->atoms.begin(), fixed->atoms.end());
    return;
  }
  const auto& iid = std::get<IidProduct>(spec.family);
  const int count = std::visit([&](const auto& law) { return sample_offspring(law, rng); },
                               iid.offspring);
  std::visit(
      [&](const auto& law) {
        for (int j = 0; j < count; ++j) out.push_back(sample_displacement(law, rng));
      },
      iid.displacement);
}

// ---------------------------------------------------------------------------
// Closed-form cumulant pieces

namespace detail {

/// nu(theta) = shift*theta + value + log_count,
/// nu'(theta) = shift + d1, nu''(theta) = d2.
/// The shift is chosen so that theta*nu' - nu = theta*d1 - value - log_count
/// can be evaluated without cancellation for large |theta|.
struct CumulantTerms {
  double shift = 0.0;
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double log_count = 0.0;
  // Part of value carried by the top atom's mass; kept apart so the tangent gap
  // does not lose the small remainder when log_top + log_count cancels.
  double log_top = 0.0;
};

// log(sinh(x)/x), even in x.
inline double log_sinhc(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-3) return ax * ax / 6.0 - ax * ax * ax * ax / 180.0;
  if (ax > 20.0) return ax - std::log(2.0 * ax) + std::log1p(-std::exp(-2.0 * ax));
  return std::log(std::sinh(ax) / ax);
}

// coth(t/2)/2 - 1/t, odd in t.
inline double half_coth_minus_inverse(double t) {
  if (std::abs(t) < 1e-3) return t / 12.0 - t * t * t / 720.0;
  return 0.5 / std::tanh(0.5 * t) - 1.0 / t;
}

// 1/t^2 - 1/(4 sinh^2(t/2)), even in t.
inline double uniform_curvature(double t) {
  if (std::abs(t) < 1e-2) return 1.0 / 12.0 - t * t / 240.0;
  const double s = std::sinh(0.5 * t);
  return 1.0 / (t * t) - 1.0 / (4.0 * s * s);
}

inline CumulantTerms displacement_terms(const GaussianDisplacement& law, double theta) {
  return {0.0, law.mean * theta + 0.5 * law.variance * theta * theta,
          law.mean + law.variance * theta, law.variance, 0.0};
}

inline CumulantTerms displacement_terms(const UniformDisplacement& law, double theta) {
  const double d = law.hi - law.lo;
  const double t = theta * d;
  const double shift = theta >= 0.0 ? law.hi : law.lo;
  const double centre = 0.5 * (law.hi + law.lo);
  CumulantTerms out;
  out.shift = shift;
  out.value = theta * (centre - shift) + log_sinhc(0.5 * t);
  out.d1 = (centre - shift) + d * half_coth_minus_inverse(t);
  out.d2 = d * d * uniform_curvature(t);
  return out;
}

/// Weighted atom cumulant: log sum_j w_j exp(theta a_j).
inline CumulantTerms atom_terms(std::span<const double> atoms, std::span<const double> weights,
                                double theta) {
  const auto [lo, hi] = std::minmax_element(atoms.begin(), atoms.end());
  const double shift = theta >= 0.0 ? *hi : *lo;
  double top = 0.0;
  double rest = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const double w = weights.empty() ? 1.0 : weights[j];
    const double off = atoms[j] - shift;
    const double e = w * std::exp(theta * off);
    if (atoms[j] == shift) {
      top += w;
    } else {
      rest += e;
    }
    m1 += e * off;
    m2 += e * off * off;
  }
  const double total = top + rest;
  CumulantTerms out;
  out.shift = shift;
  out.log_top = std::log(top);
  out.value = out.log_top + std::log1p(rest / top);
  out.d1 = m1 / total;
  out.d2 = m2 / total - out.d1 * out.d1;
  return out;
}

inline CumulantTerms displacement_terms(const TwoPointDisplacement& law, double theta) {
  const double atoms[2] = {law.a, law.c};
  const double weights[2] = {law.p, 1.0 - law.p};
  return atom_terms(atoms, weights, theta);
}

inline double log_mean_offspring(const OffspringLaw& law) {
  return std::visit(
      [](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedOffspring>) {
          return std::log(static_cast<double>(l.count));
        } else if constexpr (std::is_same_v<T, PoissonAtLeastOne>) {
          return std::log(l.lambda) - std::log(-std::expm1(-l.lambda));
        } else if constexpr (std::is_same_v<T, GeometricAtLeastOne>) {
          return -std::log(l.p);
        } else {
          return std::log(l.lambda);
        }
      },
      law);
}

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw AssumptionViolated("(A1)", std::string(what) + " must be finite so that m(theta) < inf");
  }
}

inline void validate_offspring(const OffspringLaw& law) {
  std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedOffspring>) {
          if (l.count < 1) throw AssumptionViolated("(A2)", "offspring count 0 allows extinction");
          if (l.count == 1) throw AssumptionViolated("(A2)", "P(N = 1) must be < 1");
        } else if constexpr (std::is_same_v<T, PoissonAtLeastOne>) {
          require_finite(l.lambda, "poisson lambda");
          if (!(l.lambda > 0.0)) throw AssumptionViolated("(A2)", "P(N = 1) must be < 1 (lambda > 0)");
        } else if constexpr (std::is_same_v<T, GeometricAtLeastOne>) {
          require_finite(l.p, "geometric p");
          if (!(l.p > 0.0 && l.p <= 1.0)) {
            throw AssumptionViolated("(A3)", "geometric p must lie in (0, 1] for finite moments");
          }
          if (l.p == 1.0) throw AssumptionViolated("(A2)", "P(N = 1) must be < 1");
        } else {
          throw AssumptionViolated("(A2)", "offspring law allows N = 0 (P(N >= 1) must be 1)");
        }
      },
      law);
}

inline void validate_displacement(const DisplacementLaw& law) {
  std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianDisplacement>) {
          require_finite(l.mean, "gaussian mean");
          require_finite(l.variance, "gaussian variance");
          if (!(l.variance > 0.0)) {
            throw AssumptionViolated("(A2)", "gaussian variance must be > 0 (Z would be degenerate)");
          }
        } else if constexpr (std::is_same_v<T, UniformDisplacement>) {
          require_finite(l.lo, "uniform lo");
          require_finite(l.hi, "uniform hi");
          if (!(l.lo < l.hi)) throw AssumptionViolated("(A2)", "uniform needs lo < hi");
        } else {
          require_finite(l.a, "two-point atom a");
          require_finite(l.c, "two-point atom c");
          if (!(l.p > 0.0 && l.p < 1.0) || l.a == l.c) {
            throw AssumptionViolated("(A2)", "two-point law must have 0 < p < 1 and a != c");
          }
        }
      },
      law);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// theta0

struct Theta0Finite {
  double theta0 = 0.0;
  double nu_theta0 = 0.0;
};

/// No tangency point was found in (0, search_max]; gap is
/// nu(search_max) - search_max * nu'(search_max), which is positive there.
struct Theta0Unbounded {
  double search_max = 0.0;
  double gap = 0.0;
};

using Theta0Result = std::variant<Theta0Finite, Theta0Unbounded>;

inline constexpr double kDefaultSearchMax = 64.0;
inline constexpr double kDefaultTheta0Tol = 1e-10;

class PointProcessModel;
Theta0Result solve_theta0(const PointProcessModel& model, double search_max = kDefaultSearchMax,
                          double tol = kDefaultTheta0Tol);

// ---------------------------------------------------------------------------
// PointProcessModel

/// A validated point process together with its cumulant. Immutable after
/// construction; copies share the lazily computed theta0.
class PointProcessModel {
 public:
  explicit PointProcessModel(ModelSpec spec, CumulantMode mode = AnalyticCumulant{})
      : state_(std::make_shared<State>()) {
    state_->spec = std::move(spec);
    state_->mode = mode;
    validate();
    if (const auto* fixed = std::get_if<DeterministicAtoms>(&state_->spec.family)) {
      state_->log_count = 0.0;
      (void)fixed;
    } else {
      state_->log_count =
          detail::log_mean_offspring(std::get<IidProduct>(state_->spec.family).offspring);
    }
    if (const auto* numeric = std::get_if<NumericCumulant>(&state_->mode)) build_mc_sample(*numeric);
  }

  const ModelSpec& spec() const noexcept { return state_->spec; }
  const CumulantMode& mode() const noexcept { return state_->mode; }
  bool analytic() const noexcept { return std::holds_alternative<AnalyticCumulant>(state_->mode); }

  /// E[N].
  double mean_offspring() const {
    if (const auto* fixed = std::get_if<DeterministicAtoms>(&spec().family)) {
      return static_cast<double>(fixed->atoms.size());
    }
    return std::exp(state_->log_count);
  }

  /// Left edge -vartheta of the domain of m. Every built-in law has m finite on
  /// the whole real line.
  double domain_lower() const noexcept { return -std::numeric_limits<double>::infinity(); }

  double nu(double theta) const {
    check_domain(theta);
    if (analytic()) {
      const auto t = terms(theta);
      return t.shift * theta + t.value + t.log_count;
    }
    return mc_nu(theta);
  }

  /// (nu'(theta), nu''(theta)).
  std::pair<double, double> nu_derivatives(double theta) const {
    check_domain(theta);
    if (analytic()) {
      const auto t = terms(theta);
      return {t.shift + t.d1, t.d2};
    }
    const double h = std::get<NumericCumulant>(state_->mode).diff_step * std::max(1.0, std::abs(theta));
    const double up = mc_nu(theta + h);
    const double mid = mc_nu(theta);
    const double down = mc_nu(theta - h);
    return {(up - down) / (2.0 * h), (up - 2.0 * mid + down) / (h * h)};
  }

  /// theta * nu'(theta) - nu(theta); strictly increasing on (0, inf), its root is theta0.
  double tangent_gap(double theta) const {
    check_domain(theta);
    if (analytic()) {
      const auto t = terms(theta);
      return (theta * t.d1 - (t.value - t.log_top)) - (t.log_top + t.log_count);
    }
    return theta * nu_derivatives(theta).first - mc_nu(theta);
  }

  /// Standard error of nu(theta): zero in analytic mode, delta-method error of
  /// the log of the Monte Carlo mean otherwise.
  double nu_standard_error(double theta) const {
    check_domain(theta);
    if (analytic()) return 0.0;
    const auto& atoms = state_->mc_atoms;
    const auto& offsets = state_->mc_offsets;
    const auto [lo, hi] = std::minmax_element(atoms.begin(), atoms.end());
    const double shift = std::max(theta * *lo, theta * *hi);
    const std::size_t m = offsets.size() - 1;
    double mean = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = offsets[i]; j < offsets[i + 1]; ++j) s += std::exp(theta * atoms[j] - shift);
      mean += s;
      sq += s * s;
    }
    mean /= static_cast<double>(m);
    const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean) *
                       static_cast<double>(m) / static_cast<double>(m - 1);
    return std::sqrt(var / static_cast<double>(m)) / mean;
  }

  /// theta0 with the default search range and tolerance, computed once.
  const Theta0Result& theta0() const {
    std::call_once(state_->theta0_once,
                   [this] { state_->theta0 = solve_theta0(*this, kDefaultSearchMax, kDefaultTheta0Tol); });
    return *state_->theta0;
  }

  std::optional<double> finite_theta0() const {
    if (const auto* f = std::get_if<Theta0Finite>(&theta0())) return f->theta0;
    return std::nullopt;
  }

 private:
  struct State {
    ModelSpec spec;
    CumulantMode mode;
    double log_count = 0.0;
    std::vector<double> mc_atoms;
    std::vector<std::size_t> mc_offsets;
    std::once_flag theta0_once;
    std::optional<Theta0Result> theta0;
  };

  void validate() const {
    std::visit(
        [](const auto& fam) {
          using T = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<T, IidProduct>) {
            detail::validate_offspring(fam.offspring);
            detail::validate_displacement(fam.displacement);
          } else {
            if (fam.atoms.size() < 2) {
              throw AssumptionViolated("(A2)", "deterministic atom set needs at least two atoms (P(N = 1) < 1)");
            }
            for (double a : fam.atoms) detail::require_finite(a, "atom");
            if (std::all_of(fam.atoms.begin(), fam.atoms.end(),
                            [&](double a) { return a == fam.atoms.front(); })) {
              throw AssumptionViolated("(A2)", "all atoms coincide (P(Z({t}) = N) must be < 1)");
            }
          }
        },
        state_->spec.family);
    if (const auto* numeric = std::get_if<NumericCumulant>(&state_->mode)) {
      if (numeric->mc_samples < 2) throw ConfigError("numeric cumulant needs mc_samples >= 2");
      if (!(numeric->diff_step > 0.0) || !std::isfinite(numeric->diff_step)) {
        throw ConfigError("numeric cumulant needs diff_step > 0");
      }
    }
  }

  void build_mc_sample(const NumericCumulant& numeric) {
    RngStream rng(numeric.seed, derive_stream_id({0x6e756d65726963ULL}));
    state_->mc_offsets.reserve(numeric.mc_samples + 1);
    state_->mc_offsets.push_back(0);
    for (std::size_t i = 0; i < numeric.mc_samples; ++i) {
      draw_point_process(state_->spec, rng, state_->mc_atoms);
      state_->mc_offsets.push_back(state_->mc_atoms.size());
    }
  }

  void check_domain(double theta) const {
    if (!std::isfinite(theta) || theta <= domain_lower()) {
      throw OutOfDomain("theta = " + std::to_string(theta) + " is outside the domain of m");
    }
  }

  detail::CumulantTerms terms(double theta) const {
    return std::visit(
        [&](const auto& fam) -> detail::CumulantTerms {
          using T = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<T, IidProduct>) {
            auto t = std::visit([&](const auto& law) { return detail::displacement_terms(law, theta); },
                                fam.displacement);
            t.log_count = state_->log_count;
            return t;
          } else {
            return detail::atom_terms(fam.atoms, {}, theta);
          }
        },
        state_->spec.family);
  }

  double mc_nu(double theta) const {
    const double m = static_cast<double>(state_->mc_offsets.size() - 1);
    return log_sum_exp_affine(state_->mc_atoms, theta) - std::log(m);
  }

  std::shared_ptr<State> state_;
};

inline PointProcessModel make_model(ModelSpec spec, CumulantMode mode = AnalyticCumulant{}) {
  return PointProcessModel(std::move(spec), mode);
}

inline double cumulant(const PointProcessModel& model, double theta) { return model.nu(theta); }

inline std::pair<double, double> cumulant_derivatives(const PointProcessModel& model, double theta) {
  return model.nu_derivatives(theta);
}

// ---------------------------------------------------------------------------
// Operations built on the cumulant

/// Finds theta0, the root of theta*nu'(theta) - nu(theta) on (0, search_max].
/// The function starts at -nu(0) < 0 and is increasing; the root is bracketed by
/// doubling from `tol` and then bisected down to adjacent doubles.
inline Theta0Result solve_theta0(const PointProcessModel& model, double search_max, double tol) {
  if (!(search_max > 0.0) || !(tol > 0.0)) {
    throw OutOfDomain("solve_theta0 needs search_max > 0 and tol > 0");
  }
  auto f = [&](double theta) {
    const double v = model.tangent_gap(theta);
    if (!std::isfinite(v)) {
      throw NumericFailure("theta*nu'(theta) - nu(theta) is not finite at theta = " + std::to_string(theta));
    }
    return v;
  };

  double lo = 0.0;
  double hi = std::min(tol, search_max);
  double f_hi = f(hi);
  while (f_hi < 0.0) {
    if (hi >= search_max) {
      const double nu_max = model.nu(search_max);
      const double d1 = model.nu_derivatives(search_max).first;
      return Theta0Unbounded{search_max, nu_max - search_max * d1};
    }
    lo = hi;
    hi = std::min(2.0 * hi, search_max);
    f_hi = f(hi);
  }

  double f_lo = lo > 0.0 ? f(lo) : -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 2000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    const double f_mid = f(mid);
    if (f_mid < 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
      if (f_mid == 0.0) break;
    }
  }
  const double root = (lo > 0.0 && std::abs(f_lo) < std::abs(f_hi)) ? lo : hi;
  const double residual = std::min(std::abs(f_lo), std::abs(f_hi));
  if (residual > 1e3 * tol) {
    throw NumericFailure("theta0 bisection stalled with residual " + std::to_string(residual));
  }
  return Theta0Finite{root, model.nu(root)};
}

struct Regime {
  enum class Kind { Below, Boundary, Above };
  Kind kind = Kind::Below;
  double theta = 0.0;
  std::optional<double> theta0;
  double boundary_tol = 0.0;
};

inline const char* to_string(Regime::Kind kind) {
  switch (kind) {
    case Regime::Kind::Below: return "below";
    case Regime::Kind::Boundary: return "boundary";
    case Regime::Kind::Above: return "above";
  }
  return "?";
}

/// Below / Boundary / Above relative to theta0. When boundary_tol is not given
/// the band is 1e-9 * theta0. An unbounded theta0 always gives Below.
inline Regime classify_theta(const PointProcessModel& model, double theta,
                             std::optional<double> boundary_tol = std::nullopt) {
  if (!(theta > 0.0)) throw OutOfDomain("classify_theta needs theta > 0");
  Regime r;
  r.theta = theta;
  r.theta0 = model.finite_theta0();
  if (!r.theta0) {
    r.boundary_tol = boundary_tol.value_or(0.0);
    r.kind = Regime::Kind::Below;
    return r;
  }
  const double t0 = *r.theta0;
  r.boundary_tol = boundary_tol.value_or(1e-9 * t0);
  if (std::abs(theta - t0) <= r.boundary_tol) {
    r.kind = Regime::Kind::Boundary;
  } else {
    r.kind = theta < t0 ? Regime::Kind::Below : Regime::Kind::Above;
  }
  return r;
}

/// Monte Carlo estimate of sigma^2 = E[ sum_{|v|=1} (theta0 S_v - nu0)^2 e^{theta0 S_v - nu0} ]
/// over `mc_samples` first-generation realizations.
inline double sigma_sq_monte_carlo(const PointProcessModel& model, std::size_t mc_samples, RngStream& rng) {
  const auto t0 = model.finite_theta0();
  if (!t0) throw RequiresFiniteTheta0();
  if (mc_samples == 0) throw TooFewSamples(0, 1);
  const double nu0 = model.nu(*t0);
  std::vector<double> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < mc_samples; ++i) {
    atoms.clear();
    draw_point_process(model.spec(), rng, atoms);
    double s = 0.0;
    for (double x : atoms) {
      const double c = *t0 * x - nu0;
      s += c * c * std::exp(c);
    }
    total += s;
  }
  return total / static_cast<double>(mc_samples);
}

/// sigma^2 at theta0. In analytic mode this is theta0^2 nu''(theta0) (the tilted
/// mean of theta0*S - nu0 vanishes at the tangency point); otherwise Monte Carlo.
inline double sigma_sq(const PointProcessModel& model, std::size_t mc_samples, RngStream& rng) {
  const auto t0 = model.finite_theta0();
  if (!t0) throw RequiresFiniteTheta0();
  if (model.analytic()) {
    const auto [d1, d2] = model.nu_derivatives(*t0);
    const double tilted_mean = *t0 * d1 - model.nu(*t0);
    return *t0 * *t0 * d2 + tilted_mean * tilted_mean;
  }
  return sigma_sq_monte_carlo(model, mc_samples, rng);
}

/// Checks nu'' > 0 on the grid and that nu(theta)/theta strictly decreases
/// across the grid points lying in (0, theta0).
inline TestReport verify_convexity(const PointProcessModel& model, std::span<const double> grid) {
  TestReport report;
  report.name = "convexity";
  report.sample_sizes = {grid.size()};
  double min_curvature = std::numeric_limits<double>::infinity();
  std::size_t curvature_failures = 0;
  for (double theta : grid) {
    const double d2 = model.nu_derivatives(theta).second;
    min_curvature = std::min(min_curvature, d2);
    if (!(d2 > 0.0)) ++curvature_failures;
  }

  const auto t0 = model.finite_theta0();
  std::vector<double> inside;
  for (double theta : grid) {
    if (theta > 0.0 && (!t0 || theta < *t0)) inside.push_back(theta);
  }
  std::sort(inside.begin(), inside.end());
  std::size_t ratio_failures = 0;
  for (std::size_t i = 1; i < inside.size(); ++i) {
    if (!(model.nu(inside[i]) / inside[i] < model.nu(inside[i - 1]) / inside[i - 1])) ++ratio_failures;
  }
  report.statistic = min_curvature;
  report.params = {{"min_nu_second_derivative", min_curvature},
                   {"curvature_failures", static_cast<double>(curvature_failures)},
                   {"ratio_failures", static_cast<double>(ratio_failures)}};
  report.pass = curvature_failures == 0 && ratio_failures == 0;
  return report;
}

}  // namespace lpm
