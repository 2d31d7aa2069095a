#pragma once

// Experiment configuration: a JSON document with a fixed schema. Parsing is
// strict (unknown keys are errors) and to_json emits the canonical form, with
// every default filled in, which parses back to an equal configuration.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpm/engine.hpp"
#include "lpm/error.hpp"
#include "lpm/inference.hpp"
#include "lpm/model.hpp"
#include "lpm/mu_law.hpp"

namespace lpm {

using nlohmann::json;

enum class ExperimentKind { Slln, CenteredLimit, LogCorrection, PointProcess, CouplingCheck, RdeCheck };

inline const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Slln: return "slln";
    case ExperimentKind::CenteredLimit: return "centered_limit";
    case ExperimentKind::LogCorrection: return "log_correction";
    case ExperimentKind::PointProcess: return "point_process";
    case ExperimentKind::CouplingCheck: return "coupling_check";
    case ExperimentKind::RdeCheck: return "rde_check";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::Slln, ExperimentKind::CenteredLimit, ExperimentKind::LogCorrection,
                 ExperimentKind::PointProcess, ExperimentKind::CouplingCheck, ExperimentKind::RdeCheck}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

/// A theta entry: a positive number or the symbolic boundary value theta0.
struct ThetaChoice {
  bool is_theta0 = false;
  double value = 0.0;

  static ThetaChoice theta0() { return {true, 0.0}; }
  static ThetaChoice number(double v) { return {false, v}; }
  friend bool operator==(const ThetaChoice&, const ThetaChoice&) = default;
};

enum class SampleMethod { Direct, Coupled };

inline const char* to_string(SampleMethod m) { return m == SampleMethod::Direct ? "direct" : "coupled"; }

/// Exploratory theta_n = scale * n^exponent schedule for models whose theta0
/// is unbounded. Produces diagnostics only.
struct ThetaSchedule {
  double scale = 1.0;
  double exponent = 0.5;
  friend bool operator==(const ThetaSchedule&, const ThetaSchedule&) = default;
};

struct Knobs {
  std::optional<SampleMethod> method;  // unset: per-experiment default
  bool shared_tree = true;             // log_correction: one tree per replication read at every n
  std::size_t k_atoms = 10;
  std::size_t operator_draws = 100000;
  std::vector<int> operator_ns{1, 2};
  std::size_t e_arrays = 10000;
  double shift_c = 2.0;
  std::optional<double> boundary_tol;
  double slln_tolerance = 0.2;
  double below_slope_bound = 0.15;
  double slope_tolerance = 0.25;
  double ci_z = 3.29;
  double ratio_tolerance = 0.15;
  double yw_tolerance = 0.02;
  double rde_mean_se = 4.0;
  std::size_t sigma_mc_samples = 200000;
  std::optional<ThetaSchedule> theta_schedule;
  friend bool operator==(const Knobs&, const Knobs&) = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::CouplingCheck;
  ModelSpec model{IidProduct{FixedOffspring{2}, GaussianDisplacement{0.0, 1.0}}};
  CumulantMode cumulant = AnalyticCumulant{};
  std::vector<ThetaChoice> thetas{ThetaChoice::number(0.5), ThetaChoice::theta0()};
  std::vector<MuLaw> mus{MuLaw::delta(1.0), MuLaw::uniform(0.5, 1.5)};
  std::vector<int> ns{10};
  std::size_t replications = 2000;
  std::uint64_t seed = 1;
  std::size_t cap = kDefaultPopulationCap;
  double alpha = kDefaultAlpha;
  std::string output_dir;
  Knobs knobs;
};

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline void require_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(std::string("unknown field '") + key + "' in " + where);
  }
}

inline double get_number(const json& j, const char* key, const char* where, std::optional<double> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(std::string("missing field '") + key + "' in " + where);
  }
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' in " + where + " must be a number");
  return v.get<double>();
}

inline std::string get_string(const json& j, const char* key, const char* where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ConfigError(std::string("field '") + key + "' in " + where + " must be a string");
  }
  return j.at(key).get<std::string>();
}

template <class T>
T get_unsigned(const json& j, const char* key, const char* where, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<T>();
  if (v.is_number_integer()) {
    throw ConfigError(std::string("field '") + key + "' in " + where + " must be non-negative");
  }
  throw ConfigError(std::string("field '") + key + "' in " + where + " must be an integer");
}

inline bool get_bool(const json& j, const char* key, const char* where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(std::string("field '") + key + "' in " + where + " must be boolean");
  return j.at(key).get<bool>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model

inline json offspring_to_json(const OffspringLaw& law) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedOffspring>) return {{"kind", "fixed"}, {"count", l.count}};
        else if constexpr (std::is_same_v<T, PoissonAtLeastOne>)
          return {{"kind", "poisson_at_least_one"}, {"lambda", l.lambda}};
        else if constexpr (std::is_same_v<T, GeometricAtLeastOne>)
          return {{"kind", "geometric_at_least_one"}, {"p", l.p}};
        else return {{"kind", "poisson"}, {"lambda", l.lambda}};
      },
      law);
}

inline OffspringLaw offspring_from_json(const json& j) {
  const char* where = "offspring";
  const auto kind = detail::get_string(j, "kind", where);
  if (kind == "binary") {
    detail::require_keys(j, where, {"kind"});
    return FixedOffspring{2};
  }
  if (kind == "fixed") {
    detail::require_keys(j, where, {"kind", "count"});
    if (!j.contains("count") || !j.at("count").is_number_integer()) {
      throw ConfigError("fixed offspring needs an integer 'count'");
    }
    return FixedOffspring{j.at("count").get<int>()};
  }
  if (kind == "poisson_at_least_one") {
    detail::require_keys(j, where, {"kind", "lambda"});
    return PoissonAtLeastOne{detail::get_number(j, "lambda", where)};
  }
  if (kind == "geometric_at_least_one") {
    detail::require_keys(j, where, {"kind", "p"});
    return GeometricAtLeastOne{detail::get_number(j, "p", where)};
  }
  if (kind == "poisson") {
    detail::require_keys(j, where, {"kind", "lambda"});
    return PoissonOffspring{detail::get_number(j, "lambda", where)};
  }
  throw ConfigError("unknown offspring kind '" + kind + "'");
}

inline json displacement_to_json(const DisplacementLaw& law) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianDisplacement>)
          return {{"kind", "gaussian"}, {"mean", l.mean}, {"variance", l.variance}};
        else if constexpr (std::is_same_v<T, UniformDisplacement>)
          return {{"kind", "uniform"}, {"lo", l.lo}, {"hi", l.hi}};
        else return {{"kind", "two_point"}, {"p", l.p}, {"a", l.a}, {"c", l.c}};
      },
      law);
}

inline DisplacementLaw displacement_from_json(const json& j) {
  const char* where = "displacement";
  const auto kind = detail::get_string(j, "kind", where);
  if (kind == "gaussian") {
    detail::require_keys(j, where, {"kind", "mean", "variance"});
    return GaussianDisplacement{detail::get_number(j, "mean", where, 0.0),
                                detail::get_number(j, "variance", where, 1.0)};
  }
  if (kind == "uniform") {
    detail::require_keys(j, where, {"kind", "lo", "hi"});
    return UniformDisplacement{detail::get_number(j, "lo", where), detail::get_number(j, "hi", where)};
  }
  if (kind == "two_point") {
    detail::require_keys(j, where, {"kind", "p", "a", "c"});
    return TwoPointDisplacement{detail::get_number(j, "p", where), detail::get_number(j, "a", where),
                                detail::get_number(j, "c", where)};
  }
  throw ConfigError("unknown displacement kind '" + kind + "'");
}

inline json cumulant_to_json(const CumulantMode& mode) {
  if (std::holds_alternative<AnalyticCumulant>(mode)) return {{"mode", "analytic"}};
  const auto& n = std::get<NumericCumulant>(mode);
  return {{"mode", "numeric"}, {"mc_samples", n.mc_samples}, {"diff_step", n.diff_step}, {"seed", n.seed}};
}

inline CumulantMode cumulant_from_json(const json& j) {
  const char* where = "cumulant";
  detail::require_keys(j, where, {"mode", "mc_samples", "diff_step", "seed"});
  const auto mode = detail::get_string(j, "mode", where);
  if (mode == "analytic") {
    if (j.size() != 1) throw ConfigError("analytic cumulant takes no parameters");
    return AnalyticCumulant{};
  }
  if (mode != "numeric") throw ConfigError("unknown cumulant mode '" + mode + "'");
  NumericCumulant n;
  n.mc_samples = detail::get_unsigned<std::size_t>(j, "mc_samples", where, n.mc_samples);
  n.diff_step = detail::get_number(j, "diff_step", where, n.diff_step);
  n.seed = detail::get_unsigned<std::uint64_t>(j, "seed", where, n.seed);
  if (n.mc_samples == 0 || !(n.diff_step > 0.0)) throw ConfigError("numeric cumulant needs mc_samples > 0, diff_step > 0");
  return n;
}

inline json model_to_json(const ModelSpec& spec) {
  if (const auto* iid = std::get_if<IidProduct>(&spec.family)) {
    return {{"family", "iid_product"},
            {"offspring", offspring_to_json(iid->offspring)},
            {"displacement", displacement_to_json(iid->displacement)}};
  }
  return {{"family", "deterministic_atoms"}, {"atoms", std::get<DeterministicAtoms>(spec.family).atoms}};
}

/// Parses a model record; an optional "cumulant" key is returned through `mode`.
inline ModelSpec model_from_json(const json& j, CumulantMode* mode = nullptr) {
  const char* where = "model";
  const auto family = detail::get_string(j, "family", where);
  if (j.contains("cumulant")) {
    if (!mode) throw ConfigError("unknown field 'cumulant' in model");
    *mode = cumulant_from_json(j.at("cumulant"));
  }
  if (family == "iid_product") {
    detail::require_keys(j, where, {"family", "offspring", "displacement", "cumulant"});
    if (!j.contains("offspring") || !j.contains("displacement")) {
      throw ConfigError("iid_product model needs 'offspring' and 'displacement'");
    }
    return ModelSpec{IidProduct{offspring_from_json(j.at("offspring")), displacement_from_json(j.at("displacement"))}};
  }
  if (family == "deterministic_atoms") {
    detail::require_keys(j, where, {"family", "atoms", "cumulant"});
    if (!j.contains("atoms") || !j.at("atoms").is_array()) throw ConfigError("deterministic_atoms needs an 'atoms' array");
    DeterministicAtoms d;
    for (const auto& a : j.at("atoms")) {
      if (!a.is_number()) throw ConfigError("atoms must be numbers");
      d.atoms.push_back(a.get<double>());
    }
    return ModelSpec{d};
  }
  throw ConfigError("unknown model family '" + family + "'");
}

// ---------------------------------------------------------------------------
// mu

inline json mu_to_json(const MuLaw& mu) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, DeltaMu>) return {{"kind", "delta"}, {"c", l.c}};
        else if constexpr (std::is_same_v<T, UniformMu>) return {{"kind", "uniform"}, {"a", l.a}, {"b", l.b}};
        else if constexpr (std::is_same_v<T, LogNormalMu>) return {{"kind", "lognormal"}, {"m", l.m}, {"s", l.s}};
        else return {{"kind", "shifted_exponential"}, {"rate", l.rate}, {"shift", l.shift}};
      },
      mu.law());
}

inline MuLaw mu_from_json(const json& j) {
  const char* where = "mu";
  const auto kind = detail::get_string(j, "kind", where);
  if (kind == "delta") {
    detail::require_keys(j, where, {"kind", "c"});
    return MuLaw(DeltaMu{detail::get_number(j, "c", where, 1.0)});
  }
  if (kind == "uniform") {
    detail::require_keys(j, where, {"kind", "a", "b"});
    return MuLaw(UniformMu{detail::get_number(j, "a", where), detail::get_number(j, "b", where)});
  }
  if (kind == "lognormal") {
    detail::require_keys(j, where, {"kind", "m", "s"});
    return MuLaw(LogNormalMu{detail::get_number(j, "m", where), detail::get_number(j, "s", where)});
  }
  if (kind == "shifted_exponential") {
    detail::require_keys(j, where, {"kind", "rate", "shift"});
    return MuLaw(ShiftedExponentialMu{detail::get_number(j, "rate", where), detail::get_number(j, "shift", where, 0.0)});
  }
  throw ConfigError("unknown mu kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// thetas

inline json theta_to_json(const ThetaChoice& t) { return t.is_theta0 ? json("theta0") : json(t.value); }

inline ThetaChoice theta_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "theta0") return ThetaChoice::theta0();
    throw ConfigError("theta entries are positive numbers or \"theta0\"");
  }
  if (!j.is_number()) throw ConfigError("theta entries are positive numbers or \"theta0\"");
  const double v = j.get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("theta must be a finite positive number");
  return ThetaChoice::number(v);
}

/// Parses "theta0" or a decimal number (command-line form).
inline ThetaChoice parse_theta(const std::string& s) {
  if (s == "theta0") return ThetaChoice::theta0();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse theta '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("cannot parse theta '" + s + "'");
  return theta_from_json(json(v));
}

// ---------------------------------------------------------------------------
// Knobs

inline json knobs_to_json(const Knobs& k) {
  json j = {{"shared_tree", k.shared_tree},
            {"k_atoms", k.k_atoms},
            {"operator_draws", k.operator_draws},
            {"operator_ns", k.operator_ns},
            {"e_arrays", k.e_arrays},
            {"shift_c", k.shift_c},
            {"slln_tolerance", k.slln_tolerance},
            {"below_slope_bound", k.below_slope_bound},
            {"slope_tolerance", k.slope_tolerance},
            {"ci_z", k.ci_z},
            {"ratio_tolerance", k.ratio_tolerance},
            {"yw_tolerance", k.yw_tolerance},
            {"rde_mean_se", k.rde_mean_se},
            {"sigma_mc_samples", k.sigma_mc_samples}};
  if (k.method) j["method"] = to_string(*k.method);
  if (k.boundary_tol) j["boundary_tol"] = *k.boundary_tol;
  if (k.theta_schedule) j["theta_schedule"] = {{"scale", k.theta_schedule->scale}, {"exponent", k.theta_schedule->exponent}};
  return j;
}

inline Knobs knobs_from_json(const json& j) {
  const char* where = "knobs";
  detail::require_keys(j, where,
                       {"method", "shared_tree", "k_atoms", "operator_draws", "operator_ns", "e_arrays", "shift_c",
                        "boundary_tol", "slln_tolerance", "below_slope_bound", "slope_tolerance", "ci_z",
                        "ratio_tolerance", "yw_tolerance", "rde_mean_se", "sigma_mc_samples", "theta_schedule"});
  Knobs k;
  if (j.contains("method")) {
    const auto m = detail::get_string(j, "method", where);
    if (m == "direct") k.method = SampleMethod::Direct;
    else if (m == "coupled") k.method = SampleMethod::Coupled;
    else throw ConfigError("knobs.method is 'direct' or 'coupled'");
  }
  k.shared_tree = detail::get_bool(j, "shared_tree", where, k.shared_tree);
  k.k_atoms = detail::get_unsigned<std::size_t>(j, "k_atoms", where, k.k_atoms);
  k.operator_draws = detail::get_unsigned<std::size_t>(j, "operator_draws", where, k.operator_draws);
  if (j.contains("operator_ns")) {
    k.operator_ns.clear();
    for (const auto& v : j.at("operator_ns")) {
      if (!v.is_number_integer() || v.get<int>() < 1) throw ConfigError("knobs.operator_ns entries must be integers >= 1");
      k.operator_ns.push_back(v.get<int>());
    }
  }
  k.e_arrays = detail::get_unsigned<std::size_t>(j, "e_arrays", where, k.e_arrays);
  k.shift_c = detail::get_number(j, "shift_c", where, k.shift_c);
  if (j.contains("boundary_tol")) k.boundary_tol = detail::get_number(j, "boundary_tol", where);
  k.slln_tolerance = detail::get_number(j, "slln_tolerance", where, k.slln_tolerance);
  k.below_slope_bound = detail::get_number(j, "below_slope_bound", where, k.below_slope_bound);
  k.slope_tolerance = detail::get_number(j, "slope_tolerance", where, k.slope_tolerance);
  k.ci_z = detail::get_number(j, "ci_z", where, k.ci_z);
  k.ratio_tolerance = detail::get_number(j, "ratio_tolerance", where, k.ratio_tolerance);
  k.yw_tolerance = detail::get_number(j, "yw_tolerance", where, k.yw_tolerance);
  k.rde_mean_se = detail::get_number(j, "rde_mean_se", where, k.rde_mean_se);
  k.sigma_mc_samples = detail::get_unsigned<std::size_t>(j, "sigma_mc_samples", where, k.sigma_mc_samples);
  if (j.contains("theta_schedule")) {
    const auto& s = j.at("theta_schedule");
    detail::require_keys(s, "knobs.theta_schedule", {"scale", "exponent"});
    k.theta_schedule = ThetaSchedule{detail::get_number(s, "scale", "knobs.theta_schedule", 1.0),
                                     detail::get_number(s, "exponent", "knobs.theta_schedule", 0.5)};
    if (!(k.theta_schedule->scale > 0.0)) throw ConfigError("theta_schedule.scale must be positive");
  }
  if (k.k_atoms < 2) throw ConfigError("knobs.k_atoms must be >= 2");
  if (k.shift_c <= 0.0) throw ConfigError("knobs.shift_c must be positive");
  return k;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

inline json to_json(const ExperimentConfig& c) {
  json model = model_to_json(c.model);
  model["cumulant"] = cumulant_to_json(c.cumulant);
  json thetas = json::array();
  for (const auto& t : c.thetas) thetas.push_back(theta_to_json(t));
  json mus = json::array();
  for (const auto& m : c.mus) mus.push_back(mu_to_json(m));
  return {{"experiment", to_string(c.kind)},
          {"model", model},
          {"thetas", thetas},
          {"mu", mus},
          {"ns", c.ns},
          {"replications", c.replications},
          {"seed", c.seed},
          {"cap", c.cap},
          {"alpha", c.alpha},
          {"output_dir", c.output_dir},
          {"knobs", knobs_to_json(c.knobs)}};
}

/// Checks the invariants that do not depend on the experiment kind.
inline void validate(const ExperimentConfig& c) {
  if (c.replications < 1) throw ConfigError("replications must be >= 1");
  if (c.ns.empty()) throw ConfigError("ns must be nonempty");
  for (std::size_t i = 0; i < c.ns.size(); ++i) {
    if (c.ns[i] < 0) throw ConfigError("ns entries must be >= 0");
    if (i > 0 && !(c.ns[i] > c.ns[i - 1])) throw ConfigError("ns must be strictly ascending");
  }
  if (c.thetas.empty()) throw ConfigError("thetas must be nonempty");
  if (c.mus.empty()) throw ConfigError("mu must be nonempty");
  if (c.cap < 1) throw ConfigError("cap must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

inline ExperimentConfig config_from_json(const json& j) {
  detail::require_keys(j, "config",
                       {"experiment", "model", "thetas", "mu", "ns", "replications", "seed", "cap", "alpha",
                        "output_dir", "knobs"});
  ExperimentConfig c;
  c.kind = parse_experiment_kind(detail::get_string(j, "experiment", "config"));
  if (j.contains("model")) c.model = model_from_json(j.at("model"), &c.cumulant);
  if (j.contains("thetas")) {
    const auto& t = j.at("thetas");
    c.thetas.clear();
    if (t.is_array()) {
      for (const auto& v : t) c.thetas.push_back(theta_from_json(v));
    } else {
      c.thetas.push_back(theta_from_json(t));
    }
  }
  if (j.contains("mu")) {
    const auto& m = j.at("mu");
    c.mus.clear();
    if (m.is_array()) {
      for (const auto& v : m) c.mus.push_back(mu_from_json(v));
    } else {
      c.mus.push_back(mu_from_json(m));
    }
  }
  if (j.contains("ns")) {
    if (!j.at("ns").is_array()) throw ConfigError("ns must be an array of integers");
    c.ns.clear();
    for (const auto& v : j.at("ns")) {
      if (!v.is_number_integer()) throw ConfigError("ns must be an array of integers");
      c.ns.push_back(v.get<int>());
    }
  }
  if (j.contains("replications") && j.at("replications").is_number_integer() && j.at("replications").get<long long>() < 0) {
    throw ConfigError("replications must be >= 1");
  }
  c.replications = detail::get_unsigned<std::size_t>(j, "replications", "config", c.replications);
  c.seed = detail::get_unsigned<std::uint64_t>(j, "seed", "config", c.seed);
  c.cap = detail::get_unsigned<std::size_t>(j, "cap", "config", c.cap);
  c.alpha = detail::get_number(j, "alpha", "config", c.alpha);
  if (j.contains("output_dir")) c.output_dir = detail::get_string(j, "output_dir", "config");
  if (j.contains("knobs")) c.knobs = knobs_from_json(j.at("knobs"));
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

}  // namespace lpm
