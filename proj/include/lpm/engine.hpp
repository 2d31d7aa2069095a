#pragma once

// Generation-synchronous branching random walk simulation and the particle
// functionals evaluated on its last generation: R_n, W_n(a,b), D_n, Y_n, M_n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/logsum.hpp"
#include "lpm/model.hpp"
#include "lpm/mu_law.hpp"
#include "lpm/rng.hpp"

namespace lpm {

inline constexpr std::size_t kDefaultPopulationCap = std::size_t{1} << 27;

struct SimulationOptions {
  std::size_t cap = kDefaultPopulationCap;
  /// theta values for which log W_k(theta, 0) is recorded.
  std::vector<double> theta_grid;
  /// Record log W_k and D_k for every k; otherwise only for k = n.
  bool all_generations = true;
  /// Record D_k when the model has a finite theta0.
  bool derivative_martingale = true;
};

namespace detail {

// log sum_v exp(theta x_v) given the extremes of x.
inline double log_w_from(std::span<const double> xs, double theta, double lo, double hi) {
  if (theta == 0.0) return std::log(static_cast<double>(xs.size()));
  const double shift = std::max(theta * lo, theta * hi);
  double s = 0.0;
  for (double x : xs) s += std::exp(theta * x - shift);
  return shift + std::log(s);
}

// -sum_v t_v e^{t_v}, t_v = theta0 x_v - k nu0. Positive and negative terms are
// summed separately relative to the largest exponent and differenced once.
inline SignedLog derivative_sum(std::span<const double> xs, int k, double theta0, double nu0, double hi) {
  const double drift = k * nu0;
  const double shift = theta0 * hi - drift;
  double pos = 0.0;  // terms with t < 0 contribute +|t| e^t
  double neg = 0.0;  // terms with t > 0 contribute -t e^t
  for (double x : xs) {
    const double t = theta0 * x - drift;
    const double w = std::exp(t - shift);
    if (t < 0.0) {
      pos -= t * w;
    } else {
      neg += t * w;
    }
  }
  if (pos == neg) return {};
  return {pos > neg ? 1 : -1, shift + std::log(std::abs(pos - neg))};
}

}  // namespace detail

class Trajectory;
inline Trajectory simulate(const PointProcessModel& model, int n, RngStream& rng,
                           const SimulationOptions& options);

/// One simulated run: the positions of all generation-n particles plus
/// per-generation summaries (N_k, R_k, log W_k(theta, 0) on a declared
/// theta-grid, D_k). Earlier generations' positions are not retained.
class Trajectory {
 public:
  Trajectory(PointProcessModel model, int n, std::vector<double> theta_grid)
      : model_(std::move(model)), n_(n), theta_grid_(std::move(theta_grid)) {
    const auto gens = static_cast<std::size_t>(n + 1);
    population_.assign(gens, 0);
    rightmost_.assign(gens, std::numeric_limits<double>::quiet_NaN());
    log_w_.assign(gens * theta_grid_.size(), std::numeric_limits<double>::quiet_NaN());
    derivative_.assign(gens, std::numeric_limits<double>::quiet_NaN());
  }

  const PointProcessModel& model() const noexcept { return model_; }
  int generations() const noexcept { return n_; }
  std::span<const double> positions() const noexcept { return positions_; }
  std::span<const double> theta_grid() const noexcept { return theta_grid_; }

  std::size_t population(int k) const { return population_.at(static_cast<std::size_t>(k)); }
  double rightmost(int k) const { return rightmost_.at(static_cast<std::size_t>(k)); }

  /// log W_k(theta_grid[i], 0); NaN if generation k was not summarized.
  double log_w(int k, std::size_t i) const {
    return log_w_.at(static_cast<std::size_t>(k) * theta_grid_.size() + i);
  }

  /// log W_k(theta, nu(theta)) for grid entry i.
  double normalized_log_w(int k, std::size_t i) const {
    return log_w(k, i) - k * model_.nu(theta_grid_[i]);
  }

  /// D_k; NaN if not recorded.
  double derivative_martingale(int k) const { return derivative_.at(static_cast<std::size_t>(k)); }
  bool has_derivative_martingale() const noexcept { return theta0_.has_value(); }

  /// Index of theta in the grid, if it was declared.
  std::optional<std::size_t> grid_index(double theta) const {
    for (std::size_t i = 0; i < theta_grid_.size(); ++i) {
      if (theta_grid_[i] == theta) return i;
    }
    return std::nullopt;
  }

  /// CSV with one row per generation: k, N_k, R_k, logW(theta) for each grid
  /// theta, D_k. Missing summaries are written as "nan".
  void write_csv(std::ostream& out) const {
    out << "k,N_k,R_k";
    for (double theta : theta_grid_) out << ",logW_" << format(theta);
    out << ",D_k\n";
    for (int k = 0; k <= n_; ++k) {
      out << k << ',' << population(k) << ',' << format(rightmost(k));
      for (std::size_t i = 0; i < theta_grid_.size(); ++i) out << ',' << format(log_w(k, i));
      out << ',' << format(derivative_martingale(k)) << '\n';
    }
  }

 private:
  friend Trajectory simulate(const PointProcessModel&, int, RngStream&, const SimulationOptions&);

  static std::string format(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }

  void summarize(int k, bool full) {
    const auto idx = static_cast<std::size_t>(k);
    population_[idx] = positions_.size();
    const auto [lo, hi] = std::minmax_element(positions_.begin(), positions_.end());
    rightmost_[idx] = *hi;
    if (!full) return;
    for (std::size_t i = 0; i < theta_grid_.size(); ++i) {
      log_w_[idx * theta_grid_.size() + i] = detail::log_w_from(positions_, theta_grid_[i], *lo, *hi);
    }
    if (theta0_) {
      derivative_[idx] = detail::derivative_sum(positions_, k, *theta0_, nu0_, *hi).value();
    }
  }

  PointProcessModel model_;
  int n_;
  std::vector<double> theta_grid_;
  std::vector<double> positions_;
  std::vector<std::size_t> population_;
  std::vector<double> rightmost_;
  std::vector<double> log_w_;
  std::vector<double> derivative_;
  std::optional<double> theta0_;
  double nu0_ = 0.0;
};

namespace detail {

template <class Offspring, class Displacement>
void grow_generation(const std::vector<double>& parents, std::vector<double>& children,
                     const Offspring& offspring, const Displacement& displacement, RngStream& rng,
                     std::size_t cap, int generation) {
  for (double x : parents) {
    const int count = sample_offspring(offspring, rng);
    if (children.size() + static_cast<std::size_t>(count) > cap) {
      throw PopulationCapExceeded(generation, static_cast<double>(children.size() + count), cap);
    }
    for (int j = 0; j < count; ++j) children.push_back(x + sample_displacement(displacement, rng));
  }
}

inline void grow_fixed(const std::vector<double>& parents, std::vector<double>& children,
                       std::span<const double> atoms, std::size_t cap, int generation) {
  const double size = static_cast<double>(parents.size()) * static_cast<double>(atoms.size());
  if (size > static_cast<double>(cap)) throw PopulationCapExceeded(generation, size, cap);
  for (double x : parents) {
    for (double a : atoms) children.push_back(x + a);
  }
}

}  // namespace detail

/// Simulates n generations. Each parent draws its offspring count and then its
/// children's displacements before the next parent is visited, so the result
/// depends only on (model, n, rng seed, rng stream id).
inline Trajectory simulate(const PointProcessModel& model, int n, RngStream& rng,
                           const SimulationOptions& options) {
  if (n < 0) throw OutOfDomain("simulate needs n >= 0");
  if (options.cap < 1) throw OutOfDomain("simulate needs cap >= 1");
  Trajectory traj(model, n, options.theta_grid);
  if (options.derivative_martingale) {
    if (auto t0 = model.finite_theta0()) {
      traj.theta0_ = *t0;
      traj.nu0_ = model.nu(*t0);
    }
  }
  traj.positions_.assign(1, 0.0);
  traj.summarize(0, options.all_generations || n == 0);

  std::vector<double> next;
  const double growth = model.mean_offspring();
  for (int k = 1; k <= n; ++k) {
    next.clear();
    next.reserve(static_cast<std::size_t>(
        std::min(static_cast<double>(options.cap), traj.positions_.size() * growth * 1.05 + 16.0)));
    std::visit(
        [&](const auto& fam) {
          using T = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<T, DeterministicAtoms>) {
            detail::grow_fixed(traj.positions_, next, fam.atoms, options.cap, k);
          } else {
            std::visit(
                [&](const auto& off, const auto& disp) {
                  detail::grow_generation(traj.positions_, next, off, disp, rng, options.cap, k);
                },
                fam.offspring, fam.displacement);
          }
        },
        model.spec().family);
    traj.positions_.swap(next);
    traj.summarize(k, options.all_generations || k == n);
  }
  return traj;
}

inline Trajectory simulate(const PointProcessModel& model, int n, RngStream& rng,
                           std::size_t cap = kDefaultPopulationCap, std::vector<double> theta_grid = {}) {
  SimulationOptions options;
  options.cap = cap;
  options.theta_grid = std::move(theta_grid);
  return simulate(model, n, rng, options);
}

/// Expected size of generation n, E[N]^n; used to refuse work that would exceed a cap.
inline double expected_population(const PointProcessModel& model, int n) {
  return std::pow(model.mean_offspring(), n);
}

/// log W_n(a, b) = log sum_{|v|=n} exp(a S(v) - n b). The sign is always +1.
inline SignedLog linear_statistic(const Trajectory& traj, double a, double b) {
  const auto xs = traj.positions();
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  return {1, detail::log_w_from(xs, a, *lo, *hi) - traj.generations() * b};
}

inline double rightmost(const Trajectory& traj) { return traj.rightmost(traj.generations()); }

/// D_n = -sum_{|v|=n} (theta0 S(v) - n nu0) exp(theta0 S(v) - n nu0).
inline double derivative_martingale(const Trajectory& traj, double theta0, double nu0) {
  if (!(theta0 > 0.0) || !std::isfinite(theta0)) throw RequiresFiniteTheta0();
  return detail::derivative_sum(traj.positions(), traj.generations(), theta0, nu0, rightmost(traj)).value();
}

inline double derivative_martingale(const Trajectory& traj) {
  const auto t0 = traj.model().finite_theta0();
  if (!t0) throw RequiresFiniteTheta0();
  return derivative_martingale(traj, *t0, traj.model().nu(*t0));
}

/// Draws Y_v ~ mu for every last-generation particle in order; returns their logs.
inline std::vector<double> draw_log_weights(const MuLaw& mu, std::size_t count, RngStream& rng) {
  std::vector<double> out(count);
  for (auto& y : out) y = mu.sample_log(rng);
  return out;
}

/// log Y_n^mu(theta) for given per-particle log Y_v.
inline double log_weighted_sum(const Trajectory& traj, double theta, std::span<const double> log_y) {
  const auto xs = traj.positions();
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < xs.size(); ++v) shift = std::max(shift, theta * xs[v] + log_y[v]);
  double s = 0.0;
  for (std::size_t v = 0; v < xs.size(); ++v) s += std::exp(theta * xs[v] + log_y[v] - shift);
  return shift + std::log(s);
}

/// log Y_n^mu(theta) = log sum_{|v|=n} e^{theta S(v)} Y_v with fresh Y_v ~ mu.
inline double weighted_sum_Y(const Trajectory& traj, double theta, const MuLaw& mu, RngStream& rng) {
  if (mu.is_delta()) {
    return linear_statistic(traj, theta, 0.0).log_abs + std::log(mu.mean());
  }
  const auto log_y = draw_log_weights(mu, traj.positions().size(), rng);
  return log_weighted_sum(traj, theta, log_y);
}

/// M_n(theta) = max_v e^{theta S(v)} / sum_u e^{theta S(u)}.
inline double max_weight_fraction(const Trajectory& traj, double theta) {
  const auto xs = traj.positions();
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double top = std::max(theta * *lo, theta * *hi);
  return std::min(1.0, std::exp(top - detail::log_w_from(xs, theta, *lo, *hi)));
}

// ---------------------------------------------------------------------------
// Growth diagnostics

/// Limit of W_n(a, b) by the sign of the growth exponent.
struct LinearTrend {
  enum class Limit { Zero, Martingale, Infinity };
  Limit limit = Limit::Zero;
  /// 1..5 in the order: a<theta0 with b>nu(a), b=nu(a), b<nu(a); a>=theta0 with
  /// b>=a nu0/theta0, b<a nu0/theta0.
  int case_index = 1;
};

inline const char* to_string(LinearTrend::Limit limit) {
  switch (limit) {
    case LinearTrend::Limit::Zero: return "zero";
    case LinearTrend::Limit::Martingale: return "finite";
    case LinearTrend::Limit::Infinity: return "infinity";
  }
  return "?";
}

inline LinearTrend predict_linear_trend(const PointProcessModel& model, double a, double b,
                                        double rel_tol = 1e-12) {
  if (!(a > 0.0)) throw OutOfDomain("predict_linear_trend needs a > 0");
  const auto t0 = model.finite_theta0();
  if (!t0 || a < *t0) {
    const double nu_a = model.nu(a);
    const double tol = rel_tol * std::max(1.0, std::abs(nu_a));
    if (b > nu_a + tol) return {LinearTrend::Limit::Zero, 1};
    if (b >= nu_a - tol) return {LinearTrend::Limit::Martingale, 2};
    return {LinearTrend::Limit::Infinity, 3};
  }
  const double edge = a * model.nu(*t0) / *t0;
  if (b >= edge) return {LinearTrend::Limit::Zero, 4};
  return {LinearTrend::Limit::Infinity, 5};
}

/// Almost-sure limit of log W_n(theta, 0) / (n theta).
inline double growth_limit(const PointProcessModel& model, double theta) {
  const auto t0 = model.finite_theta0();
  if (!t0 || theta < *t0) return model.nu(theta) / theta;
  return model.nu(*t0) / *t0;
}

struct GrowthRow {
  int n = 0;
  double theta = 0.0;
  double value = 0.0;      // log W_n(theta) / (n theta)
  double predicted = 0.0;  // growth_limit(theta)
};

/// log W_n(theta)/(n theta) for every trajectory (n >= 1) and theta in the grid.
inline std::vector<GrowthRow> growth_diagnostics(std::span<const Trajectory> trajectories,
                                                 std::span<const double> theta_grid) {
  std::vector<GrowthRow> rows;
  for (const auto& traj : trajectories) {
    const int n = traj.generations();
    if (n < 1) throw OutOfDomain("growth_diagnostics needs n >= 1");
    for (double theta : theta_grid) {
      const double lw = linear_statistic(traj, theta, 0.0).log_abs;
      rows.push_back({n, theta, lw / (n * theta), growth_limit(traj.model(), theta)});
    }
  }
  return rows;
}

}  // namespace lpm
