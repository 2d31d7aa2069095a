#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lpm {

/// Outcome of one statistical or numerical check.
///
/// KS-type checks carry a p-value and alpha, and pass iff p_value >= alpha.
/// Tolerance checks carry neither; their threshold sits in `params` and they
/// pass iff the statistic is within it.
struct TestReport {
  std::string name;
  double statistic = 0.0;
  std::optional<double> p_value;
  std::vector<std::size_t> sample_sizes;
  std::map<std::string, double> params;
  std::optional<double> alpha;
  bool pass = false;
};

/// Tolerance check: statistic = |value - target|, pass iff statistic <= tolerance.
inline TestReport tolerance_report(std::string name, double value, double target,
                                   double tolerance, std::vector<std::size_t> sizes = {}) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = std::abs(value - target);
  r.sample_sizes = std::move(sizes);
  r.params = {{"value", value}, {"target", target}, {"tolerance", tolerance}};
  r.pass = std::isfinite(value) && r.statistic <= tolerance;
  return r;
}

/// Interval check: pass iff lo <= value <= hi.
inline TestReport interval_report(std::string name, double value, double lo, double hi,
                                  std::vector<std::size_t> sizes = {}) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = value;
  r.sample_sizes = std::move(sizes);
  r.params = {{"value", value}, {"lower", lo}, {"upper", hi}};
  r.pass = std::isfinite(value) && value >= lo && value <= hi;
  return r;
}

namespace detail {
inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const TestReport& r) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : r.params) params[k] = detail::finite_or_null(v);
  j = nlohmann::json{{"name", r.name},
                     {"statistic", detail::finite_or_null(r.statistic)},
                     {"p_value", r.p_value ? detail::finite_or_null(*r.p_value) : nlohmann::json(nullptr)},
                     {"params", params},
                     {"alpha", r.alpha ? nlohmann::json(*r.alpha) : nlohmann::json(nullptr)},
                     {"sample_sizes", r.sample_sizes},
                     {"pass", r.pass}};
}

inline void from_json(const nlohmann::json& j, TestReport& r) {
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  r.name = j.at("name").get<std::string>();
  r.statistic = num(j.at("statistic"));
  r.p_value = j.at("p_value").is_null() ? std::nullopt : std::optional<double>(j.at("p_value").get<double>());
  r.params.clear();
  for (const auto& [k, v] : j.at("params").items()) r.params[k] = num(v);
  r.alpha = j.at("alpha").is_null() ? std::nullopt : std::optional<double>(j.at("alpha").get<double>());
  r.sample_sizes = j.value("sample_sizes", std::vector<std::size_t>{});
  r.pass = j.at("pass").get<bool>();
}

}  // namespace lpm
