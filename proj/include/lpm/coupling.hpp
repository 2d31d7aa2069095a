#pragma once

// The last-progeny-modified maximum R_n*(theta, mu), computed directly and via
// its exact coupling with the linear statistic log Y_n^mu(theta) - log E; the
// maximum / linear / link operators; extremal atoms and the exponential
// transform of the last generation; one step of the smoothing transform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <boost/random/uniform_int_distribution.hpp>

#include "lpm/engine.hpp"
#include "lpm/error.hpp"
#include "lpm/model.hpp"
#include "lpm/mu_law.hpp"
#include "lpm/rng.hpp"

namespace lpm {

/// One draw of log Y - log E with Y ~ mu, E ~ Exponential(1) independent (Y first).
inline double link_sample(const MuLaw& mu, RngStream& rng) {
  const double log_y = mu.sample_log(rng);
  return log_y - std::log(rng.exponential());
}

struct LpmSample {
  enum class Method { Direct, Coupled };
  double value = 0.0;
  Method method = Method::Direct;
  int n = 0;
  double theta = 0.0;
  std::optional<double> log_y;  // log Y_n^mu(theta) from the same draws
  std::optional<double> log_w;  // log W_n(theta, 0)
};

/// max_v [S(v) + (log Y_v - log E_v) / theta] for given log Y_v (empty means
/// every Y_v = 1); draws one E_v per particle in particle order.
inline double lpm_max_given_weights(const Trajectory& traj, double theta, std::span<const double> log_y,
                                    RngStream& rng, double log_y_constant = 0.0) {
  if (!(theta > 0.0)) throw OutOfDomain("LPM maximum needs theta > 0");
  const auto xs = traj.positions();
  const double inv = 1.0 / theta;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < xs.size(); ++v) {
    const double ly = log_y.empty() ? log_y_constant : log_y[v];
    best = std::max(best, xs[v] + (ly - std::log(rng.exponential())) * inv);
  }
  return best;
}

/// R_n* = max_v [S(v) + (log Y_v - log E_v) / theta]. All Y_v are drawn first,
/// then the E_v, both in particle order. With `companions` the same Y_v feed
/// log Y_n^mu(theta).
inline LpmSample lpm_max_direct(const Trajectory& traj, double theta, const MuLaw& mu, RngStream& rng,
                                bool companions = false) {
  if (!(theta > 0.0)) throw OutOfDomain("LPM maximum needs theta > 0");
  std::vector<double> log_y;
  const double delta_log = mu.is_delta() ? std::log(mu.mean()) : 0.0;
  if (!mu.is_delta()) log_y = draw_log_weights(mu, traj.positions().size(), rng);

  LpmSample out;
  out.value = lpm_max_given_weights(traj, theta, log_y, rng, delta_log);
  out.method = LpmSample::Method::Direct;
  out.n = traj.generations();
  out.theta = theta;
  if (companions) {
    const double lw = linear_statistic(traj, theta, 0.0).log_abs;
    out.log_w = lw;
    out.log_y = log_y.empty() ? lw + delta_log : log_weighted_sum(traj, theta, log_y);
  }
  return out;
}

/// (log Y_n^mu(theta) - log E) / theta with a fresh E drawn after the Y_v.
inline LpmSample lpm_max_coupled(const Trajectory& traj, double theta, const MuLaw& mu, RngStream& rng,
                                 bool companions = false) {
  if (!(theta > 0.0)) throw OutOfDomain("LPM maximum needs theta > 0");
  const double log_y = weighted_sum_Y(traj, theta, mu, rng);
  const double e = rng.exponential();
  LpmSample out;
  out.value = (log_y - std::log(e)) / theta;
  out.method = LpmSample::Method::Coupled;
  out.n = traj.generations();
  out.theta = theta;
  if (companions) {
    out.log_y = log_y;
    out.log_w = linear_statistic(traj, theta, 0.0).log_abs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operators on laws, realized one draw at a time

enum class OperatorKind { Max, Linear };

using Sampler = std::function<double(RngStream&)>;

/// One draw of M_Z(eta) = max_j (xi_j + X_j) or L_Z(mu) = sum_j e^{xi_j} Y_j
/// from a fresh realization of Z; `input` draws X_j (resp. Y_j). Takes the bare
/// point-process law, so degenerate Z (which no model accepts) can be used too.
inline double operator_step(OperatorKind kind, const ModelSpec& z, const Sampler& input, RngStream& rng) {
  std::vector<double> atoms;
  draw_point_process(z, rng, atoms);
  if (kind == OperatorKind::Max) {
    double best = -std::numeric_limits<double>::infinity();
    for (double xi : atoms) best = std::max(best, xi + input(rng));
    return best;
  }
  double sum = 0.0;
  for (double xi : atoms) sum += std::exp(xi) * input(rng);
  return sum;
}

inline double operator_step(OperatorKind kind, const PointProcessModel& model, const Sampler& input,
                            RngStream& rng) {
  return operator_step(kind, model.spec(), input, rng);
}

/// One draw of the n-fold composition of the operator applied to `input`.
inline double operator_power(OperatorKind kind, const ModelSpec& z, int n, const Sampler& input, RngStream& rng) {
  if (n <= 0) return input(rng);
  const Sampler inner = [&](RngStream& r) { return operator_power(kind, z, n - 1, input, r); };
  return operator_step(kind, z, inner, rng);
}

inline double operator_power(OperatorKind kind, const PointProcessModel& model, int n, const Sampler& input,
                             RngStream& rng) {
  return operator_power(kind, model.spec(), n, input, rng);
}

/// Link operator applied to an arbitrary positive sampler: log Y - log E.
inline double link_of(const Sampler& positive, RngStream& rng) {
  const double y = positive(rng);
  return std::log(y) - std::log(rng.exponential());
}

// ---------------------------------------------------------------------------
// Atom sets

enum class Centering { ByLogW, ByDrift, ByDriftBoundary };

inline const char* to_string(Centering c) {
  switch (c) {
    case Centering::ByLogW: return "log_w";
    case Centering::ByDrift: return "drift";
    case Centering::ByDriftBoundary: return "drift_boundary";
  }
  return "?";
}

/// Top-k atoms of a centered extremal point process, sorted descending.
struct AtomSet {
  std::vector<double> atoms;
  Centering centering = Centering::ByLogW;
  double centering_value = 0.0;
  int n = 0;
  double theta = 0.0;
};

/// Maps every atom z to a*z - b; a >= 0 keeps the order.
inline AtomSet rescale_atoms(AtomSet set, double a, double b) {
  if (!(a >= 0.0)) throw OutOfDomain("rescale_atoms needs a >= 0");
  for (auto& z : set.atoms) z = a * z - b;
  return set;
}

namespace detail {

// Indices of the k largest values, ties broken by lower index first.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k, bool largest) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  auto before = [&](std::size_t i, std::size_t j) {
    if (values[i] != values[j]) return largest ? values[i] > values[j] : values[i] < values[j];
    return i < j;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Atoms theta S_v - log E_v - c for the selected centering c, top k of them.
/// Only mu = delta_1 is supported (the atoms carry no log Y_v term).
inline AtomSet extremal_atoms(const Trajectory& traj, double theta, RngStream& rng, std::size_t k,
                              Centering centering) {
  if (k < 1) throw OutOfDomain("extremal_atoms needs k >= 1");
  if (!(theta > 0.0)) throw OutOfDomain("extremal_atoms needs theta > 0");
  const int n = traj.generations();
  const auto& model = traj.model();
  double c = 0.0;
  switch (centering) {
    case Centering::ByLogW:
      c = linear_statistic(traj, theta, 0.0).log_abs;
      break;
    case Centering::ByDrift:
      c = n * model.nu(theta);
      break;
    case Centering::ByDriftBoundary: {
      const auto t0 = model.finite_theta0();
      if (!t0) throw RequiresFiniteTheta0();
      if (classify_theta(model, theta).kind != Regime::Kind::Boundary) {
        throw InvalidRegime("boundary centering needs theta = theta0");
      }
      if (n < 1) throw OutOfDomain("boundary centering needs n >= 1");
      c = n * model.nu(*t0) - 0.5 * std::log(static_cast<double>(n));
      break;
    }
  }

  const auto xs = traj.positions();
  std::vector<double> values(xs.size());
  for (std::size_t v = 0; v < xs.size(); ++v) values[v] = theta * xs[v] - std::log(rng.exponential()) - c;

  AtomSet set;
  set.centering = centering;
  set.centering_value = c;
  set.n = n;
  set.theta = theta;
  for (std::size_t i : detail::top_k_indices(values, k, true)) set.atoms.push_back(values[i]);
  for (std::size_t i = 1; i < set.atoms.size(); ++i) {
    if (!(set.atoms[i] < set.atoms[i - 1])) {
      set.atoms[i] = std::nextafter(set.atoms[i - 1], -std::numeric_limits<double>::infinity());
    }
  }
  return set;
}

inline void write_atom_csv_header(std::ostream& out) {
  out << "rank,atom_value,centering,n,theta,replication_id\n";
}

inline void write_atom_csv_rows(std::ostream& out, const AtomSet& set, std::size_t replication_id) {
  char buf[64];
  for (std::size_t r = 0; r < set.atoms.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", set.atoms[r]);
    out << (r + 1) << ',' << buf << ',' << to_string(set.centering) << ',' << set.n << ',';
    std::snprintf(buf, sizeof buf, "%.17g", set.theta);
    out << buf << ',' << replication_id << '\n';
  }
}

/// Smallest k values of {E_v W_n(theta) e^{-theta S_v}}, ascending, and the sum
/// of the exponential rates e^{theta S_v} / W_n(theta).
struct PoissonTransform {
  std::vector<double> values;
  double rate_sum = 0.0;
};

inline PoissonTransform poisson_transform(const Trajectory& traj, double theta, RngStream& rng, std::size_t k) {
  const auto xs = traj.positions();
  if (k < 1 || k > xs.size()) throw OutOfDomain("poisson_transform needs 1 <= k <= N_n");
  const double lw = linear_statistic(traj, theta, 0.0).log_abs;
  std::vector<double> values(xs.size());
  double rate_sum = 0.0;
  for (std::size_t v = 0; v < xs.size(); ++v) {
    const double log_rate = theta * xs[v] - lw;
    rate_sum += std::exp(log_rate);
    values[v] = rng.exponential() * std::exp(-log_rate);
  }
  if (!(std::abs(rate_sum - 1.0) < 1e-9)) {
    throw NumericFailure("exponential rates do not sum to 1 (got " + std::to_string(rate_sum) + ")");
  }
  PoissonTransform out;
  out.rate_sum = rate_sum;
  for (std::size_t i : detail::top_k_indices(values, k, false)) out.values.push_back(values[i]);
  return out;
}

/// One draw of sum_{|v|=1} e^{theta S_v - nu(theta)} Delta_v with Delta_v
/// resampled (with replacement) from `delta_samples`.
inline double rde_one_step(std::span<const double> delta_samples, const PointProcessModel& model, double theta,
                           RngStream& rng) {
  if (delta_samples.empty()) throw TooFewSamples(0, 1);
  if (auto t0 = model.finite_theta0(); t0 && !(theta < *t0)) {
    throw InvalidRegime("the linear fixed-point equation is used below the boundary only (theta < theta0)");
  }
  const double nu = model.nu(theta);
  std::vector<double> atoms;
  draw_point_process(model.spec(), rng, atoms);
  boost::random::uniform_int_distribution<std::size_t> pick(0, delta_samples.size() - 1);
  double sum = 0.0;
  for (double xi : atoms) sum += std::exp(theta * xi - nu) * delta_samples[pick(rng)];
  return sum;
}

}  // namespace lpm
