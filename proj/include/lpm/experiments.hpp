#pragma once

// Config-driven experiments. Each run fans replications out over worker
// threads; every replication owns an RngStream derived from (experiment,
// cell, replication), and results are gathered by index, so the output bytes
// do not depend on the number of threads.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpm/config.hpp"
#include "lpm/coupling.hpp"
#include "lpm/engine.hpp"
#include "lpm/error.hpp"
#include "lpm/inference.hpp"
#include "lpm/model.hpp"
#include "lpm/report.hpp"
#include "lpm/svg.hpp"

namespace lpm {

// ---------------------------------------------------------------------------
// Result containers

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Fields containing a comma are wrapped in double quotes.
  void write_csv(std::ostream& out) const {
    auto field = [&out](std::size_t i, const std::string& f) {
      if (i) out << ',';
      if (f.find(',') != std::string::npos) {
        out << '"' << f << '"';
      } else {
        out << f;
      }
    };
    for (std::size_t i = 0; i < columns.size(); ++i) field(i, columns[i]);
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) field(i, row[i]);
      out << '\n';
    }
  }
};

inline std::string cell(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
inline std::string cell(int x) { return std::to_string(x); }
inline std::string cell(std::size_t x) { return std::to_string(x); }
inline std::string cell(const std::string& s) { return s; }
inline std::string cell(const char* s) { return s; }
inline std::string cell(bool b) { return b ? "true" : "false"; }

/// A plot the `report` command can re-render from the CSV files alone.
struct PlotSpec {
  std::string kind;  // "line" or "histogram"
  std::string svg;
  std::string title;
  std::string csv;
  std::string x;         // line: x column; histogram: value column
  std::string y;         // line only
  std::string group_by;  // line: one series per distinct value
  std::map<std::string, std::string> filter;
  std::string xlabel;
  std::string ylabel;
  std::optional<svg::GumbelOverlay> gumbel;
};

inline void to_json(nlohmann::json& j, const PlotSpec& p) {
  j = {{"kind", p.kind}, {"svg", p.svg}, {"title", p.title}, {"csv", p.csv},   {"x", p.x},
       {"y", p.y},       {"group_by", p.group_by}, {"filter", p.filter}, {"xlabel", p.xlabel}, {"ylabel", p.ylabel}};
  if (p.gumbel) j["gumbel"] = {{"location", p.gumbel->location}, {"scale", p.gumbel->scale}};
}

inline void from_json(const nlohmann::json& j, PlotSpec& p) {
  p.kind = j.at("kind").get<std::string>();
  p.svg = j.at("svg").get<std::string>();
  p.title = j.value("title", "");
  p.csv = j.at("csv").get<std::string>();
  p.x = j.at("x").get<std::string>();
  p.y = j.value("y", "");
  p.group_by = j.value("group_by", "");
  p.filter = j.value("filter", std::map<std::string, std::string>{});
  p.xlabel = j.value("xlabel", p.x);
  p.ylabel = j.value("ylabel", p.y);
  if (j.contains("gumbel")) {
    p.gumbel = svg::GumbelOverlay{j.at("gumbel").at("location").get<double>(), j.at("gumbel").at("scale").get<double>()};
  }
}

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::CouplingCheck;
  std::deque<Table> tables;  // deque: references returned by table() stay valid
  std::vector<TestReport> acceptance;   // decide the exit status
  std::vector<TestReport> diagnostics;  // informational
  std::map<std::string, double> constants;
  std::vector<PlotSpec> plots;
  nlohmann::json config_echo;
  double wall_seconds = 0.0;  // run.log only

  bool passed() const {
    return std::all_of(acceptance.begin(), acceptance.end(), [](const TestReport& r) { return r.pass; });
  }

  Table& table(const std::string& name, std::vector<std::string> columns) {
    for (auto& t : tables) {
      if (t.name == name) return t;
    }
    tables.push_back(Table{name, std::move(columns), {}});
    return tables.back();
  }
};

struct RunContext {
  unsigned threads = 0;  // 0: hardware concurrency
  /// Called with the partial result after each completed cell.
  std::function<void(const ExperimentResult&)> checkpoint;
  std::function<void(const std::string&)> log;

  void note(const std::string& msg) const {
    if (log) log(msg);
  }
  void save(const ExperimentResult& r) const {
    if (checkpoint) checkpoint(r);
  }
};

// ---------------------------------------------------------------------------
// Parallel map

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// f(i) for i in [0, count), computed on up to `threads` workers and returned
/// in index order. The first failure (by index) is rethrown after all workers stop.
template <class F>
auto parallel_map(std::size_t count, unsigned threads, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1)));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Shared setup

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Purposes keep streams of different roles within one experiment apart.
enum Purpose : std::uint64_t {
  kTree = 1,
  kDirect = 2,
  kCoupled = 3,
  kFixedTree = 4,
  kEArrays = 5,
  kOperator = 6,
  kShift = 7,
  kRde = 8,
  kConstants = 9,
  kSchedule = 10,
};

inline std::string theta_label(const ThetaChoice& t) {
  if (t.is_theta0) return "theta0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t.value);
  return buf;
}

struct Setup {
  PointProcessModel model;
  std::vector<double> thetas;
  std::vector<std::string> labels;
  std::vector<Regime> regimes;
  std::uint64_t tag = 0;
  std::optional<double> theta0;
};

inline Setup prepare(const ExperimentConfig& cfg) {
  validate(cfg);
  Setup s{PointProcessModel(cfg.model, cfg.cumulant), {}, {}, {}, fnv1a(to_string(cfg.kind)), std::nullopt};
  s.theta0 = s.model.finite_theta0();
  for (const auto& t : cfg.thetas) {
    double v = t.value;
    if (t.is_theta0) {
      if (!s.theta0) throw RequiresFiniteTheta0();
      v = *s.theta0;
    }
    s.thetas.push_back(v);
    s.labels.push_back(theta_label(t));
    s.regimes.push_back(classify_theta(s.model, v, cfg.knobs.boundary_tol));
  }
  // Refuse work whose largest cell is expected to exceed the particle cap.
  const int n_max = cfg.ns.back();
  const double expected = expected_population(s.model, n_max);
  if (expected > static_cast<double>(cfg.cap)) throw PopulationCapExceeded(n_max, expected, cfg.cap);
  return s;
}

inline SimulationOptions tree_options(const ExperimentConfig& cfg, const Setup& s, bool all_generations,
                                      bool derivative) {
  SimulationOptions o;
  o.cap = cfg.cap;
  o.theta_grid = s.thetas;
  o.all_generations = all_generations;
  o.derivative_martingale = derivative;
  return o;
}

inline double median_of(std::vector<double> v) { return median(v); }

inline std::string series_label(const std::string& theta, const MuLaw& mu) {
  return "theta=" + theta + " mu=" + mu.describe();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// slln

/// Medians of R_n*/n against nu(theta)/theta (below theta0) or nu0/theta0.
inline ExperimentResult run_slln(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  if (cfg.ns.front() < 1) throw ConfigError("slln needs n >= 1");
  const auto method = cfg.knobs.method.value_or(SampleMethod::Direct);
  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);
  if (s.theta0) res.constants["theta0"] = *s.theta0;

  auto& tab = res.table("slln", {"series", "theta_label", "theta", "regime", "mu", "n", "replications", "mean",
                                 "median", "standard_error", "target", "deviation"});
  auto& growth = res.table("growth", {"theta_label", "theta", "n", "median_log_w_rate", "target"});
  const std::size_t T = s.thetas.size();
  const std::size_t M = cfg.mus.size();

  for (int n : cfg.ns) {
    struct Rep {
      std::vector<double> ratio;   // [t * M + m]
      std::vector<double> growth;  // [t]
    };
    auto reps = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n), r}));
      const auto traj = simulate(s.model, n, rng, detail::tree_options(cfg, s, false, false));
      Rep out;
      for (std::size_t t = 0; t < T; ++t) {
        out.growth.push_back(traj.log_w(n, t) / (n * s.thetas[t]));
        for (const auto& mu : cfg.mus) {
          const auto sample = method == SampleMethod::Direct ? lpm_max_direct(traj, s.thetas[t], mu, rng)
                                                             : lpm_max_coupled(traj, s.thetas[t], mu, rng);
          out.ratio.push_back(sample.value / n);
        }
      }
      return out;
    });
    for (std::size_t t = 0; t < T; ++t) {
      const double target = growth_limit(s.model, s.thetas[t]);
      std::vector<double> g;
      for (const auto& rep : reps) g.push_back(rep.growth[t]);
      growth.rows.push_back({s.labels[t], cell(s.thetas[t]), cell(n), cell(detail::median_of(g)), cell(target)});
      for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> v;
        for (const auto& rep : reps) v.push_back(rep.ratio[t * M + m]);
        const double med = detail::median_of(v);
        const double se = v.size() > 1 ? standard_error(v) : std::numeric_limits<double>::quiet_NaN();
        tab.rows.push_back({detail::series_label(s.labels[t], cfg.mus[m]), s.labels[t],
                            cell(s.thetas[t]), to_string(s.regimes[t].kind), cfg.mus[m].describe(), cell(n),
                            cell(cfg.replications), cell(mean(v)), cell(med), cell(se), cell(target),
                            cell(med - target)});
        if (n == cfg.ns.back()) {
          auto rep = tolerance_report("slln[theta=" + s.labels[t] + ",mu=" + cfg.mus[m].describe() + "]", med,
                                      target, cfg.knobs.slln_tolerance, {cfg.replications});
          rep.params["n"] = n;
          rep.params["theta"] = s.thetas[t];
          res.acceptance.push_back(rep);
        }
      }
    }
    ctx.save(res);
  }

  if (cfg.knobs.theta_schedule) {
    // Exploratory: theta_n grows with n; reports R*/n and R_n/n side by side.
    const auto sched = *cfg.knobs.theta_schedule;
    auto& st = res.table("theta_schedule", {"n", "theta_n", "median_lpm_ratio", "median_rightmost_ratio"});
    for (int n : cfg.ns) {
      const double theta_n = sched.scale * std::pow(static_cast<double>(n), sched.exponent);
      auto pairs = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
        RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kSchedule, std::uint64_t(n), r}));
        SimulationOptions o;
        o.cap = cfg.cap;
        o.all_generations = false;
        o.derivative_martingale = false;
        const auto traj = simulate(s.model, n, rng, o);
        return std::pair{lpm_max_direct(traj, theta_n, cfg.mus.front(), rng).value / n, rightmost(traj) / n};
      });
      std::vector<double> a, b;
      for (const auto& [x, y] : pairs) {
        a.push_back(x);
        b.push_back(y);
      }
      st.rows.push_back({cell(n), cell(theta_n), cell(detail::median_of(a)), cell(detail::median_of(b))});
    }
  }

  res.plots.push_back({"line", "slln.svg", "median R*_n / n", "slln.csv", "n", "median", "series", {}, "n",
                       "median R*_n / n", std::nullopt});
  return res;
}

// ---------------------------------------------------------------------------
// centered_limit

/// Residuals theta R_n* - log Y_n (exactly standard Gumbel) and
/// theta R_n* - log W_n - log<mu>; the ratio Y_n / (<mu> W_n); at theta0 the
/// ratio sqrt(n) W_n(theta0, nu0) / D_n.
inline ExperimentResult run_centered_limit(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  for (const auto& r : s.regimes) {
    if (r.kind == Regime::Kind::Above) throw InvalidRegime("centered_limit is defined for theta <= theta0");
  }
  const auto method = cfg.knobs.method.value_or(SampleMethod::Direct);
  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);
  const std::size_t T = s.thetas.size();
  const std::size_t M = cfg.mus.size();

  std::optional<std::size_t> boundary;
  for (std::size_t t = 0; t < T; ++t) {
    if (s.regimes[t].kind == Regime::Kind::Boundary) boundary = t;
  }
  double as_target = std::numeric_limits<double>::quiet_NaN();
  if (s.theta0) {
    RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kConstants}));
    const double sig = sigma_sq(s.model, cfg.knobs.sigma_mc_samples, rng);
    as_target = std::sqrt(2.0 / (std::numbers::pi * sig));
    res.constants["theta0"] = *s.theta0;
    res.constants["sigma_sq"] = sig;
    res.constants["aidekon_shi_target"] = as_target;
  }

  auto& fits = res.table("centered_limit", {"theta_label", "theta", "mu", "n", "set", "replications", "location",
                                            "scale", "ks_statistic", "ks_p_value"});
  auto& ratios = res.table("y_over_w", {"theta_label", "theta", "mu", "n", "median_ratio", "mean_ratio"});
  auto& as_tab = res.table("aidekon_shi", {"n", "log_n", "median_ratio", "target"});
  auto& samples = res.table("residual_samples", {"theta_label", "mu", "n", "set", "replication", "value"});

  for (int n : cfg.ns) {
    struct Rep {
      std::vector<double> set_i, set_ii, ratio;  // [t * M + m]
      double as_ratio = std::numeric_limits<double>::quiet_NaN();
    };
    const bool with_as = boundary && n >= 1;
    auto reps = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n), r}));
      const auto traj = simulate(s.model, n, rng, detail::tree_options(cfg, s, false, with_as));
      Rep out;
      for (std::size_t t = 0; t < T; ++t) {
        for (const auto& mu : cfg.mus) {
          const double theta = s.thetas[t];
          const auto smp = method == SampleMethod::Direct ? lpm_max_direct(traj, theta, mu, rng, true)
                                                          : lpm_max_coupled(traj, theta, mu, rng, true);
          out.set_i.push_back(theta * smp.value - *smp.log_y);
          out.set_ii.push_back(theta * smp.value - *smp.log_w - std::log(mu.mean()));
          out.ratio.push_back(std::exp(*smp.log_y - *smp.log_w) / mu.mean());
        }
      }
      if (with_as) {
        out.as_ratio = std::sqrt(static_cast<double>(n)) * std::exp(traj.normalized_log_w(n, *boundary)) /
                       traj.derivative_martingale(n);
      }
      return out;
    });

    const bool last = n == cfg.ns.back();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t idx = t * M + m;
        std::vector<double> a, b, q;
        for (const auto& rep : reps) {
          a.push_back(rep.set_i[idx]);
          b.push_back(rep.set_ii[idx]);
          q.push_back(rep.ratio[idx]);
        }
        const std::string tag = "[theta=" + s.labels[t] + ",mu=" + cfg.mus[m].describe() + ",n=" + std::to_string(n) + "]";
        auto exact = ks_one_sample(a, gumbel_cdf(0.0, 1.0), "realization_centered_gumbel" + tag, cfg.alpha);
        res.acceptance.push_back(exact);
        const auto fit_i = fit_gumbel(a, "realization_centered_fit" + tag, cfg.alpha);
        const auto fit_ii = fit_gumbel(b, "observable_centered_fit" + tag, cfg.alpha);
        res.diagnostics.push_back(fit_i.report);
        res.diagnostics.push_back(fit_ii.report);
        fits.rows.push_back({s.labels[t], cell(s.thetas[t]), cfg.mus[m].describe(), cell(n), "realization",
                             cell(cfg.replications), cell(fit_i.location), cell(fit_i.scale), cell(exact.statistic),
                             cell(*exact.p_value)});
        fits.rows.push_back({s.labels[t], cell(s.thetas[t]), cfg.mus[m].describe(), cell(n), "observable",
                             cell(cfg.replications), cell(fit_ii.location), cell(fit_ii.scale),
                             cell(fit_ii.report.statistic), cell(*fit_ii.report.p_value)});
        const double med_q = detail::median_of(q);
        ratios.rows.push_back({s.labels[t], cell(s.thetas[t]), cfg.mus[m].describe(), cell(n), cell(med_q), cell(mean(q))});
        if (last && !cfg.mus[m].is_delta()) {
          res.acceptance.push_back(tolerance_report("y_over_w" + tag, med_q, 1.0, cfg.knobs.yw_tolerance, {cfg.replications}));
        }
        if (last) {
          for (std::size_t r = 0; r < a.size(); ++r) {
            samples.rows.push_back({s.labels[t], cfg.mus[m].describe(), cell(n), "realization", cell(r), cell(a[r])});
            samples.rows.push_back({s.labels[t], cfg.mus[m].describe(), cell(n), "observable", cell(r), cell(b[r])});
          }
          const std::string stem = "residuals_theta" + s.labels[t] + "_mu" + std::to_string(m);
          res.plots.push_back({"histogram", stem + "_realization.svg",
                               "theta R* - log Y, theta=" + s.labels[t] + ", mu=" + cfg.mus[m].describe(),
                               "residual_samples.csv", "value", "", "",
                               {{"theta_label", s.labels[t]}, {"mu", cfg.mus[m].describe()}, {"set", "realization"}},
                               "residual", "density", svg::GumbelOverlay{fit_i.location, fit_i.scale}});
          res.plots.push_back({"histogram", stem + "_observable.svg",
                               "theta R* - log W - log<mu>, theta=" + s.labels[t] + ", mu=" + cfg.mus[m].describe(),
                               "residual_samples.csv", "value", "", "",
                               {{"theta_label", s.labels[t]}, {"mu", cfg.mus[m].describe()}, {"set", "observable"}},
                               "residual", "density", svg::GumbelOverlay{fit_ii.location, fit_ii.scale}});
        }
      }
    }
    if (with_as) {
      std::vector<double> v;
      for (const auto& rep : reps) {
        if (std::isfinite(rep.as_ratio)) v.push_back(rep.as_ratio);
      }
      const double med = detail::median_of(v);
      as_tab.rows.push_back({cell(n), cell(std::log(static_cast<double>(n))), cell(med), cell(as_target)});
      if (last) {
        auto rep = tolerance_report("aidekon_shi_ratio[n=" + std::to_string(n) + "]", med, as_target,
                                    cfg.knobs.ratio_tolerance * as_target, {v.size()});
        res.acceptance.push_back(rep);
      }
    }
    ctx.save(res);
  }
  if (boundary) {
    res.plots.push_back({"line", "aidekon_shi.svg", "median sqrt(n) W_n(theta0, nu0) / D_n", "aidekon_shi.csv",
                         "log_n", "median_ratio", "", {}, "log n", "median ratio", std::nullopt});
  }
  return res;
}

// ---------------------------------------------------------------------------
// log_correction

/// Medians of R_n* - n * drift regressed on log n, per theta regime.
inline ExperimentResult run_log_correction(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  const std::size_t T = s.thetas.size();
  const std::size_t M = cfg.mus.size();
  for (std::size_t t = 0; t < T; ++t) {
    if (s.regimes[t].kind != Regime::Kind::Above) continue;
    for (const auto& mu : cfg.mus) {
      if (!mu.is_delta_one()) throw InvalidRegime("above theta0 the log correction is stated for mu = delta(1) only");
    }
  }
  const auto method = cfg.knobs.method.value_or(SampleMethod::Coupled);
  const bool all_delta = std::all_of(cfg.mus.begin(), cfg.mus.end(), [](const MuLaw& m) { return m.is_delta(); });
  const bool shared = cfg.knobs.shared_tree && method == SampleMethod::Coupled && all_delta;

  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);
  std::vector<double> drift(T), target(T);
  for (std::size_t t = 0; t < T; ++t) {
    drift[t] = growth_limit(s.model, s.thetas[t]);
    switch (s.regimes[t].kind) {
      case Regime::Kind::Below: target[t] = 0.0; break;
      case Regime::Kind::Boundary: target[t] = -0.5 / *s.theta0; break;
      case Regime::Kind::Above: target[t] = -1.5 / *s.theta0; break;
    }
  }
  if (s.theta0) {
    res.constants["theta0"] = *s.theta0;
    res.constants["boundary_slope_target"] = -0.5 / *s.theta0;
    res.constants["above_slope_target"] = -1.5 / *s.theta0;
  }

  auto& med_tab = res.table("log_correction", {"series", "theta_label", "theta", "regime", "mu", "n", "log_n",
                                               "replications", "median", "mean", "drift", "median_rightmost"});
  // values[t * M + m][n index][r]
  std::vector<std::vector<std::vector<double>>> values(T * M, std::vector<std::vector<double>>(cfg.ns.size()));
  std::vector<std::vector<double>> right(cfg.ns.size());

  if (shared) {
    ctx.note("log_correction: one tree per replication read at every n, common E across n");
    const int n_max = cfg.ns.back();
    struct Rep {
      std::vector<double> v;   // [(t * M + m) * K + k]
      std::vector<double> rm;  // [k]
    };
    const std::size_t K = cfg.ns.size();
    auto reps = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n_max), r}));
      const auto traj = simulate(s.model, n_max, rng, detail::tree_options(cfg, s, true, false));
      Rep out;
      out.v.resize(T * M * K);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t m = 0; m < M; ++m) {
          const double log_e = std::log(rng.exponential());
          const double log_c = std::log(cfg.mus[m].mean());
          for (std::size_t k = 0; k < K; ++k) {
            const int n = cfg.ns[k];
            out.v[(t * M + m) * K + k] = (traj.log_w(n, t) + log_c - log_e) / s.thetas[t] - n * drift[t];
          }
        }
      }
      for (std::size_t k = 0; k < K; ++k) out.rm.push_back(traj.rightmost(cfg.ns[k]));
      return out;
    });
    for (const auto& rep : reps) {
      for (std::size_t i = 0; i < T * M; ++i) {
        for (std::size_t k = 0; k < K; ++k) values[i][k].push_back(rep.v[i * K + k]);
      }
      for (std::size_t k = 0; k < K; ++k) right[k].push_back(rep.rm[k]);
    }
  } else {
    for (std::size_t k = 0; k < cfg.ns.size(); ++k) {
      const int n = cfg.ns[k];
      auto reps = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
        RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n), r}));
        const auto traj = simulate(s.model, n, rng, detail::tree_options(cfg, s, false, false));
        std::vector<double> v;
        for (std::size_t t = 0; t < T; ++t) {
          for (const auto& mu : cfg.mus) {
            const auto smp = method == SampleMethod::Direct ? lpm_max_direct(traj, s.thetas[t], mu, rng)
                                                            : lpm_max_coupled(traj, s.thetas[t], mu, rng);
            v.push_back(smp.value - n * drift[t]);
          }
        }
        v.push_back(rightmost(traj));
        return v;
      });
      for (const auto& rep : reps) {
        for (std::size_t i = 0; i < T * M; ++i) values[i][k].push_back(rep[i]);
        right[k].push_back(rep.back());
      }
    }
  }

  struct Fit {
    std::size_t t, m;
    SlopeFit fit;
  };
  std::vector<Fit> fitted;
  auto& slopes = res.table("slopes", {"theta_label", "theta", "regime", "mu", "slope", "slope_se", "intercept",
                                      "target", "ci_lower", "ci_upper"});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < M; ++m) {
      std::map<int, double> points;
      for (std::size_t k = 0; k < cfg.ns.size(); ++k) {
        const int n = cfg.ns[k];
        const auto& v = values[t * M + m][k];
        const double med = detail::median_of(v);
        points[n] = med;
        std::vector<double> rm;
        for (double x : right[k]) rm.push_back(x - n * drift[t]);
        med_tab.rows.push_back({detail::series_label(s.labels[t], cfg.mus[m]), s.labels[t],
                                cell(s.thetas[t]), to_string(s.regimes[t].kind), cfg.mus[m].describe(), cell(n),
                                cell(std::log(static_cast<double>(n))), cell(v.size()), cell(med), cell(mean(v)),
                                cell(drift[t]), cell(detail::median_of(rm))});
      }
      const auto fit = fit_log_correction(points, target[t]);
      const double lo = fit.slope - cfg.knobs.ci_z * fit.slope_se;
      const double hi = fit.slope + cfg.knobs.ci_z * fit.slope_se;
      slopes.rows.push_back({s.labels[t], cell(s.thetas[t]), to_string(s.regimes[t].kind), cfg.mus[m].describe(),
                             cell(fit.slope), cell(fit.slope_se), cell(fit.intercept), cell(target[t]), cell(lo),
                             cell(hi)});
      const std::string name = "log_correction_slope[theta=" + s.labels[t] + ",mu=" + cfg.mus[m].describe() + "," +
                               to_string(s.regimes[t].kind) + "]";
      TestReport rep;
      if (s.regimes[t].kind == Regime::Kind::Below) {
        rep = interval_report(name, fit.slope, -cfg.knobs.below_slope_bound, cfg.knobs.below_slope_bound,
                              {cfg.replications});
      } else {
        const double a = target[t] * (1.0 - cfg.knobs.slope_tolerance);
        const double b = target[t] * (1.0 + cfg.knobs.slope_tolerance);
        rep = interval_report(name, fit.slope, std::min(a, b), std::max(a, b), {cfg.replications});
      }
      rep.params["target"] = target[t];
      rep.params["slope_se"] = fit.slope_se;
      rep.params["points"] = static_cast<double>(fit.points);
      res.acceptance.push_back(rep);
      fitted.push_back({t, m, fit});
      res.constants["slope[theta=" + s.labels[t] + ",mu=" + cfg.mus[m].describe() + "]"] = fit.slope;
    }
  }

  // Regimes are distinguishable when confidence intervals of different regimes never overlap.
  bool multiple = false;
  for (std::size_t t = 1; t < T; ++t) multiple |= s.regimes[t].kind != s.regimes[0].kind;
  if (multiple) {
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < fitted.size(); ++i) {
      for (std::size_t j = i + 1; j < fitted.size(); ++j) {
        if (s.regimes[fitted[i].t].kind == s.regimes[fitted[j].t].kind) continue;
        const auto& a = fitted[i].fit;
        const auto& b = fitted[j].fit;
        const double gap = std::abs(a.slope - b.slope) - cfg.knobs.ci_z * (a.slope_se + b.slope_se);
        min_gap = std::min(min_gap, gap);
      }
    }
    TestReport rep;
    rep.name = "regimes_distinguishable";
    rep.statistic = min_gap;
    rep.sample_sizes = {cfg.replications};
    rep.params["ci_z"] = cfg.knobs.ci_z;
    rep.pass = min_gap > 0.0;
    res.acceptance.push_back(rep);
  }
  res.plots.push_back({"line", "log_correction.svg", "median R*_n - n drift", "log_correction.csv", "log_n", "median",
                       "series", {}, "log n", "median R*_n - n drift", std::nullopt});
  ctx.save(res);
  return res;
}

// ---------------------------------------------------------------------------
// point_process

inline void write_atom_rows(Table& tab, const AtomSet& set, std::size_t replication_id) {
  for (std::size_t r = 0; r < set.atoms.size(); ++r) {
    tab.rows.push_back({cell(r + 1), cell(set.atoms[r]), to_string(set.centering), cell(set.n), cell(set.theta),
                        cell(replication_id)});
  }
}

/// Spacings of the exponential transform, the top atom of the log W-centered
/// extremal process, and the gap between its two largest atoms.
inline ExperimentResult run_point_process(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  for (const auto& r : s.regimes) {
    if (r.kind == Regime::Kind::Above) throw InvalidRegime("point_process is defined for theta <= theta0");
  }
  for (const auto& mu : cfg.mus) {
    if (!mu.is_delta_one()) throw InvalidMu("point_process atoms are defined for mu = delta(1)");
  }
  const std::size_t T = s.thetas.size();
  const std::size_t k = cfg.knobs.k_atoms;
  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);

  auto& summary = res.table("point_process", {"theta_label", "theta", "n", "test", "statistic", "p_value", "pass"});
  auto& atoms_tab = res.table("atoms", {"rank", "atom_value", "centering", "n", "theta", "replication_id"});
  auto& tops = res.table("top_atoms", {"theta_label", "n", "replication", "top_atom", "gap"});
  std::vector<std::vector<double>> first_gaps(T);

  for (int n : cfg.ns) {
    struct Rep {
      std::vector<std::vector<double>> transform;  // [t]
      std::vector<AtomSet> atoms;                   // [t]
    };
    auto reps = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n), r}));
      const auto traj = simulate(s.model, n, rng, detail::tree_options(cfg, s, false, false));
      const std::size_t kk = std::min(k, traj.positions().size());
      Rep out;
      for (std::size_t t = 0; t < T; ++t) {
        out.transform.push_back(poisson_transform(traj, s.thetas[t], rng, kk).values);
        out.atoms.push_back(extremal_atoms(traj, s.thetas[t], rng, kk, Centering::ByLogW));
      }
      return out;
    });
    const bool last = n == cfg.ns.back();
    for (std::size_t t = 0; t < T; ++t) {
      const std::string tag = "[theta=" + s.labels[t] + ",n=" + std::to_string(n) + "]";
      std::vector<std::vector<double>> seqs;
      std::vector<double> top, gap;
      for (std::size_t r = 0; r < reps.size(); ++r) {
        seqs.push_back(reps[r].transform[t]);
        const auto& a = reps[r].atoms[t].atoms;
        top.push_back(a[0]);
        if (a.size() >= 2) gap.push_back(a[0] - a[1]);
        if (last) {
          write_atom_rows(atoms_tab, reps[r].atoms[t], r);
          tops.rows.push_back({s.labels[t], cell(n), cell(r), cell(a[0]),
                               cell(a.size() >= 2 ? a[0] - a[1] : std::numeric_limits<double>::quiet_NaN())});
        }
      }
      auto add = [&](TestReport rep, bool acceptance) {
        summary.rows.push_back({s.labels[t], cell(s.thetas[t]), cell(n), rep.name, cell(rep.statistic),
                                cell(rep.p_value.value_or(std::numeric_limits<double>::quiet_NaN())), cell(rep.pass)});
        (acceptance ? res.acceptance : res.diagnostics).push_back(std::move(rep));
      };
      // The Poisson limit is asymptotic: only the largest n decides acceptance.
      add(spacing_exponentiality(seqs, k, "transform_spacings" + tag, cfg.alpha), last);
      add(ks_one_sample(top, gumbel_cdf(0.0, 1.0), "top_atom_gumbel" + tag, cfg.alpha), last);
      if (gap.size() >= kMinKsSamples) {
        add(ks_one_sample(gap, exponential_cdf(1.0), "top_gap_exponential" + tag, cfg.alpha), false);
        if (first_gaps[t].empty()) {
          first_gaps[t] = gap;
        } else if (last) {
          add(ks_two_sample(first_gaps[t], gap, "top_gap_stability" + tag, cfg.alpha), false);
        }
      }
      if (last) {
        res.plots.push_back({"histogram", "top_atom_theta" + s.labels[t] + ".svg",
                             "top atom of log W-centered process, theta=" + s.labels[t], "top_atoms.csv", "top_atom",
                             "", "", {{"theta_label", s.labels[t]}}, "top atom", "density",
                             svg::GumbelOverlay{0.0, 1.0}});
      }
    }
    ctx.save(res);
  }
  return res;
}

// ---------------------------------------------------------------------------
// coupling_check

/// Conditional coupling on a fixed tree, direct-versus-coupled equality in law,
/// the operator identity M_Z^n o E = E o L_Z^n, and delta_c shift equivariance.
inline ExperimentResult run_coupling_check(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  const std::size_t T = s.thetas.size();
  const std::size_t M = cfg.mus.size();
  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);
  if (s.theta0) res.constants["theta0"] = *s.theta0;

  auto& tab = res.table("coupling_check", {"check", "n", "theta_label", "mu", "statistic", "p_value", "sample_sizes", "pass"});
  auto& cond_samples = res.table("conditional_samples", {"n", "theta_label", "mu", "value"});
  auto record = [&](const TestReport& rep, int n, const std::string& theta, const std::string& mu) {
    std::string sizes;
    for (std::size_t i = 0; i < rep.sample_sizes.size(); ++i) sizes += (i ? "x" : "") + std::to_string(rep.sample_sizes[i]);
    tab.rows.push_back({rep.name.substr(0, rep.name.find('[')), cell(n), theta, mu, cell(rep.statistic),
                        cell(rep.p_value.value_or(std::numeric_limits<double>::quiet_NaN())), sizes, cell(rep.pass)});
    res.acceptance.push_back(rep);
  };

  constexpr std::size_t kBlock = 1000;
  for (int n : cfg.ns) {
    // Conditional: one tree, one set of Y_v, many independent E-arrays.
    RngStream tree_rng(cfg.seed, derive_stream_id({s.tag, detail::kFixedTree, std::uint64_t(n)}));
    const auto fixed = simulate(s.model, n, tree_rng, detail::tree_options(cfg, s, false, false));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        const auto& mu = cfg.mus[m];
        const double theta = s.thetas[t];
        std::vector<double> log_y;
        if (!mu.is_delta()) log_y = draw_log_weights(mu, fixed.positions().size(), tree_rng);
        const double log_c = mu.is_delta() ? std::log(mu.mean()) : 0.0;
        const double log_big_y = log_y.empty() ? linear_statistic(fixed, theta, 0.0).log_abs + log_c
                                               : log_weighted_sum(fixed, theta, log_y);
        auto vals = parallel_map(cfg.knobs.e_arrays, ctx.threads, [&](std::size_t e) {
          RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kEArrays, std::uint64_t(n), t, m, e}));
          return theta * lpm_max_given_weights(fixed, theta, log_y, rng, log_c) - log_big_y;
        });
        const std::string tag = "[n=" + std::to_string(n) + ",theta=" + s.labels[t] + ",mu=" + mu.describe() + "]";
        record(ks_one_sample(vals, gumbel_cdf(0.0, 1.0), "conditional_coupling" + tag, cfg.alpha), n, s.labels[t],
               mu.describe());
        if (n == cfg.ns.back()) {
          for (double v : vals) cond_samples.rows.push_back({cell(n), s.labels[t], mu.describe(), cell(v)});
          res.plots.push_back({"histogram", "conditional_theta" + s.labels[t] + "_mu" + std::to_string(m) + ".svg",
                               "theta R* - log Y on a fixed tree, theta=" + s.labels[t] + ", mu=" + mu.describe(),
                               "conditional_samples.csv", "value", "", "",
                               {{"theta_label", s.labels[t]}, {"mu", mu.describe()}}, "value", "density",
                               svg::GumbelOverlay{0.0, 1.0}});
        }
      }
    }

    // Unconditional: independent trees on each side.
    auto both = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      std::vector<double> direct, coupled;
      RngStream rd(cfg.seed, derive_stream_id({s.tag, detail::kDirect, std::uint64_t(n), r}));
      const auto td = simulate(s.model, n, rd, detail::tree_options(cfg, s, false, false));
      RngStream rc(cfg.seed, derive_stream_id({s.tag, detail::kCoupled, std::uint64_t(n), r}));
      const auto tc = simulate(s.model, n, rc, detail::tree_options(cfg, s, false, false));
      for (std::size_t t = 0; t < T; ++t) {
        for (const auto& mu : cfg.mus) {
          direct.push_back(lpm_max_direct(td, s.thetas[t], mu, rd).value);
          coupled.push_back(lpm_max_coupled(tc, s.thetas[t], mu, rc).value);
        }
      }
      return std::pair{direct, coupled};
    });
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> a, b;
        for (const auto& [d, c] : both) {
          a.push_back(d[t * M + m]);
          b.push_back(c[t * M + m]);
        }
        const std::string tag = "[n=" + std::to_string(n) + ",theta=" + s.labels[t] + ",mu=" + cfg.mus[m].describe() + "]";
        record(ks_two_sample(a, b, "direct_vs_coupled" + tag, cfg.alpha), n, s.labels[t], cfg.mus[m].describe());
      }
    }

    // delta_c shifts every sample by log(c) / theta; same streams on both sides.
    const std::size_t shift_reps = std::min<std::size_t>(cfg.replications, 100);
    const MuLaw one = MuLaw::delta(1.0);
    const MuLaw shifted = MuLaw::delta(cfg.knobs.shift_c);
    for (std::size_t t = 0; t < T; ++t) {
      const double theta = s.thetas[t];
      const double expected = std::log(cfg.knobs.shift_c) / theta;
      auto errs = parallel_map(shift_reps, ctx.threads, [&](std::size_t r) {
        const auto id = derive_stream_id({s.tag, detail::kShift, std::uint64_t(n), t, r});
        double worst = 0.0;
        for (int which = 0; which < 2; ++which) {
          RngStream r1(cfg.seed, id), r2(cfg.seed, id);
          const auto t1 = simulate(s.model, n, r1, detail::tree_options(cfg, s, false, false));
          const auto t2 = simulate(s.model, n, r2, detail::tree_options(cfg, s, false, false));
          const double a = which == 0 ? lpm_max_direct(t1, theta, one, r1).value : lpm_max_coupled(t1, theta, one, r1).value;
          const double b = which == 0 ? lpm_max_direct(t2, theta, shifted, r2).value
                                      : lpm_max_coupled(t2, theta, shifted, r2).value;
          worst = std::max(worst, std::abs((b - a) - expected) / (1.0 + std::abs(a)));
        }
        return worst;
      });
      const double worst = *std::max_element(errs.begin(), errs.end());
      auto rep = interval_report("shift_equivariance[n=" + std::to_string(n) + ",theta=" + s.labels[t] + "]", worst,
                                 0.0, 1e-12, {shift_reps});
      rep.params["c"] = cfg.knobs.shift_c;
      record(rep, n, s.labels[t], "delta(" + cell(cfg.knobs.shift_c) + ")");
    }
    ctx.save(res);
  }

  // Operator identity on the first-generation point process.
  for (int on : cfg.knobs.operator_ns) {
    for (std::size_t m = 0; m < M; ++m) {
      const auto& mu = cfg.mus[m];
      const std::size_t draws = cfg.knobs.operator_draws;
      const std::size_t blocks = (draws + kBlock - 1) / kBlock;
      auto chunks = parallel_map(blocks, ctx.threads, [&](std::size_t b) {
        RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kOperator, std::uint64_t(on), m, b}));
        const Sampler link = [&mu](RngStream& r) { return link_sample(mu, r); };
        const Sampler draw_mu = [&mu](RngStream& r) { return mu.sample(r); };
        const Sampler linear = [&](RngStream& r) { return operator_power(OperatorKind::Linear, s.model, on, draw_mu, r); };
        std::vector<double> lhs, rhs;
        const std::size_t count = std::min(kBlock, draws - b * kBlock);
        for (std::size_t i = 0; i < count; ++i) {
          lhs.push_back(operator_power(OperatorKind::Max, s.model, on, link, rng));
          rhs.push_back(link_of(linear, rng));
        }
        return std::pair{lhs, rhs};
      });
      std::vector<double> lhs, rhs;
      for (const auto& [a, b] : chunks) {
        lhs.insert(lhs.end(), a.begin(), a.end());
        rhs.insert(rhs.end(), b.begin(), b.end());
      }
      record(ks_two_sample(lhs, rhs, "operator_identity[n=" + std::to_string(on) + ",mu=" + mu.describe() + "]", cfg.alpha),
             on, "", mu.describe());
    }
  }
  ctx.save(res);
  return res;
}

// ---------------------------------------------------------------------------
// rde_check

/// W_n(theta, nu(theta)) at the largest n as a proxy for the fixed point of
/// the smoothing transform; one smoothing step should leave its law unchanged.
inline ExperimentResult run_rde_check(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  auto s = detail::prepare(cfg);
  for (const auto& r : s.regimes) {
    if (r.kind != Regime::Kind::Below) throw InvalidRegime("rde_check needs theta < theta0");
  }
  const int n = cfg.ns.back();
  ExperimentResult res;
  res.kind = cfg.kind;
  res.config_echo = to_json(cfg);
  auto& tab = res.table("rde_check", {"theta_label", "theta", "n", "replications", "input_mean", "input_se",
                                      "output_mean", "ks_statistic", "ks_p_value"});
  auto& samples = res.table("rde_samples", {"theta_label", "replication", "input", "output"});

  auto inputs_all = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
    RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kTree, std::uint64_t(n), r}));
    const auto traj = simulate(s.model, n, rng, detail::tree_options(cfg, s, false, false));
    std::vector<double> w;
    for (std::size_t t = 0; t < s.thetas.size(); ++t) w.push_back(std::exp(traj.normalized_log_w(n, t)));
    return w;
  });
  for (std::size_t t = 0; t < s.thetas.size(); ++t) {
    const double theta = s.thetas[t];
    std::vector<double> input;
    for (const auto& w : inputs_all) input.push_back(w[t]);
    auto output = parallel_map(cfg.replications, ctx.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kRde, std::uint64_t(n), t, r}));
      return rde_one_step(input, s.model, theta, rng);
    });
    const std::string tag = "[theta=" + s.labels[t] + ",n=" + std::to_string(n) + "]";
    const auto ks = ks_two_sample(input, output, "rde_fixed_point" + tag, cfg.alpha);
    res.acceptance.push_back(ks);
    const double m = mean(input);
    const double se = standard_error(input);
    const double k = cfg.knobs.rde_mean_se;
    auto mean_rep = interval_report("martingale_mean" + tag, m, 1.0 - k * se, 1.0 + k * se, {input.size()});
    mean_rep.params["standard_error"] = se;
    res.acceptance.push_back(mean_rep);
    if (std::holds_alternative<DeterministicAtoms>(s.model.spec().family)) {
      RngStream rng(cfg.seed, derive_stream_id({s.tag, detail::kConstants, t}));
      const std::vector<double> ones{1.0};
      const double out = rde_one_step(ones, s.model, theta, rng);
      res.acceptance.push_back(tolerance_report("rde_constant_input" + tag, out, 1.0, 1e-12, {1}));
    }
    tab.rows.push_back({s.labels[t], cell(theta), cell(n), cell(cfg.replications), cell(m), cell(se),
                        cell(mean(output)), cell(ks.statistic), cell(*ks.p_value)});
    for (std::size_t r = 0; r < input.size(); ++r) {
      samples.rows.push_back({s.labels[t], cell(r), cell(input[r]), cell(output[r])});
    }
    res.plots.push_back({"histogram", "rde_input_theta" + s.labels[t] + ".svg",
                         "W_n(theta, nu(theta)), theta=" + s.labels[t], "rde_samples.csv", "input", "", "",
                         {{"theta_label", s.labels[t]}}, "W_n", "density", std::nullopt});
    ctx.save(res);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dispatch and output

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunContext& ctx = {}) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult res;
  switch (cfg.kind) {
    case ExperimentKind::Slln: res = run_slln(cfg, ctx); break;
    case ExperimentKind::CenteredLimit: res = run_centered_limit(cfg, ctx); break;
    case ExperimentKind::LogCorrection: res = run_log_correction(cfg, ctx); break;
    case ExperimentKind::PointProcess: res = run_point_process(cfg, ctx); break;
    case ExperimentKind::CouplingCheck: res = run_coupling_check(cfg, ctx); break;
    case ExperimentKind::RdeCheck: res = run_rde_check(cfg, ctx); break;
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

// Splits one CSV line; fields may be wrapped in double quotes.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  Table t;
  t.name = path.stem().string();
  std::string line;
  if (std::getline(in, line)) t.columns = split_csv(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split_csv(line));
  }
  return t;
}

inline std::size_t column_index(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (t.columns[i] == name) return i;
  }
  throw ConfigError("table '" + t.name + "' has no column '" + name + "'");
}

}  // namespace detail

/// Renders every plot of the manifest from the CSV files in `dir`.
inline void render_plots(const std::filesystem::path& dir, const std::vector<PlotSpec>& plots) {
  for (const auto& p : plots) {
    const auto table = detail::read_csv(dir / p.csv);
    std::vector<std::pair<std::size_t, std::string>> filters;
    for (const auto& [col, val] : p.filter) filters.emplace_back(detail::column_index(table, col), val);
    auto keep = [&](const std::vector<std::string>& row) {
      for (const auto& [i, v] : filters) {
        if (i >= row.size() || row[i] != v) return false;
      }
      return true;
    };
    const std::size_t xi = detail::column_index(table, p.x);
    std::string text;
    if (p.kind == "line") {
      const std::size_t yi = detail::column_index(table, p.y);
      std::vector<svg::Series> series;
      std::optional<std::size_t> gi;
      if (!p.group_by.empty()) gi = detail::column_index(table, p.group_by);
      for (const auto& row : table.rows) {
        if (!keep(row)) continue;
        const std::string g = gi ? row[*gi] : p.y;
        auto it = std::find_if(series.begin(), series.end(), [&](const svg::Series& s) { return s.name == g; });
        if (it == series.end()) {
          series.push_back({g, {}, {}});
          it = series.end() - 1;
        }
        it->xs.push_back(std::strtod(row[xi].c_str(), nullptr));
        it->ys.push_back(std::strtod(row[yi].c_str(), nullptr));
      }
      text = svg::line_plot(p.title, p.xlabel, p.ylabel, series);
    } else if (p.kind == "histogram") {
      std::vector<double> xs;
      for (const auto& row : table.rows) {
        if (keep(row)) xs.push_back(std::strtod(row[xi].c_str(), nullptr));
      }
      text = svg::histogram(p.title, p.xlabel, xs, p.gumbel);
    } else {
      throw ConfigError("unknown plot kind '" + p.kind + "'");
    }
    detail::write_file(dir / p.svg, text);
  }
}

/// Writes everything except run.log: config.json, one CSV per table,
/// reports.json, constants.json, plots.json and the SVGs.
inline void write_result(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "config.json", res.config_echo.dump(2) + "\n");
  for (const auto& t : res.tables) {
    std::ostringstream out;
    t.write_csv(out);
    detail::write_file(dir / (t.name + ".csv"), out.str());
  }
  nlohmann::json reports = {{"experiment", to_string(res.kind)},
                            {"pass", res.passed()},
                            {"acceptance", res.acceptance},
                            {"diagnostics", res.diagnostics}};
  detail::write_file(dir / "reports.json", reports.dump(2) + "\n");
  detail::write_file(dir / "constants.json", nlohmann::json(res.constants).dump(2) + "\n");
  detail::write_file(dir / "plots.json", nlohmann::json(res.plots).dump(2) + "\n");
  render_plots(dir, res.plots);
}

/// Re-renders the plots listed in dir/plots.json.
inline std::size_t rerender(const std::filesystem::path& dir) {
  const auto text = read_text_file((dir / "plots.json").string());
  std::vector<PlotSpec> plots;
  try {
    plots = nlohmann::json::parse(text).get<std::vector<PlotSpec>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed plots.json: ") + e.what());
  }
  render_plots(dir, plots);
  return plots.size();
}

}  // namespace lpm
