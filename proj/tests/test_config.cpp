#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "lpm/config.hpp"

using namespace lpm;

namespace {

const char* kMinimal = R"({"experiment": "slln"})";

std::string canonical(const ExperimentConfig& c) { return to_json(c).dump(); }

}  // namespace

TEST(Config, DefaultsFillIn) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.kind, ExperimentKind::Slln);
  EXPECT_EQ(c.replications, 2000u);
  EXPECT_EQ(c.ns, std::vector<int>{10});
  ASSERT_EQ(c.thetas.size(), 2u);
  EXPECT_TRUE(c.thetas[1].is_theta0);
  EXPECT_EQ(c.alpha, 1e-3);
  EXPECT_EQ(c.cap, std::size_t{1} << 27);
}

TEST(Config, CanonicalFormRoundTrips) {
  const std::filesystem::path dir = LPM_CONFIG_DIR;
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const auto c = load_config(entry.path().string());
    const auto again = config_from_json(to_json(c));
    EXPECT_EQ(canonical(c), canonical(again)) << entry.path();
    EXPECT_EQ(c.knobs, again.knobs);
    EXPECT_EQ(c.thetas, again.thetas);
  }
  EXPECT_GE(seen, 6u);
}

TEST(Config, EveryModelAndMuKindRoundTrips) {
  const char* text = R"({
    "experiment": "coupling_check",
    "model": {"family": "iid_product",
              "offspring": {"kind": "poisson_at_least_one", "lambda": 1.5},
              "displacement": {"kind": "two_point", "p": 0.3, "a": 1.0, "c": -0.5},
              "cumulant": {"mode": "numeric", "mc_samples": 1000, "diff_step": 0.001, "seed": 9}},
    "thetas": 0.7,
    "mu": [{"kind": "delta", "c": 2}, {"kind": "uniform", "a": 0.5, "b": 1.5},
           {"kind": "lognormal", "m": 0.1, "s": 0.5}, {"kind": "shifted_exponential", "rate": 2, "shift": 0.5}],
    "ns": [2, 4],
    "replications": 5,
    "knobs": {"method": "direct", "theta_schedule": {"scale": 0.5, "exponent": 0.25}, "boundary_tol": 1e-6}
  })";
  const auto c = parse_config(text);
  EXPECT_EQ(c.mus.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<NumericCumulant>(c.cumulant));
  EXPECT_EQ(canonical(c), canonical(config_from_json(to_json(c))));

  const char* geo = R"({"experiment": "slln", "model": {"family": "iid_product",
      "offspring": {"kind": "geometric_at_least_one", "p": 0.4},
      "displacement": {"kind": "uniform", "lo": -1, "hi": 2}}})";
  const auto g = parse_config(geo);
  EXPECT_EQ(canonical(g), canonical(config_from_json(to_json(g))));

  const char* det = R"({"experiment": "slln", "model": {"family": "deterministic_atoms", "atoms": [1, -1]}})";
  const auto d = parse_config(det);
  EXPECT_EQ(canonical(d), canonical(config_from_json(to_json(d))));
}

TEST(Config, UnknownFieldsAreRejected) {
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "replicates": 10})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "knobs": {"k_atom": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "model": {"family": "deterministic_atoms", "atoms": [1, -1], "x": 1}})"),
               ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "mu": {"kind": "delta", "c": 1, "d": 2}})"), ConfigError);
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(parse_config(R"({"experiment": "bogus"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "replications": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "replications": -3})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "ns": []})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "ns": [10, 8]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "ns": [4, 4]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "thetas": [-1]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "alpha": 1.5})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"experiment": "slln", "mu": {"kind": "uniform", "a": 2, "b": 1}})"), Error);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(Config, PoissonOffspringParsesButIsRefusedAsModel) {
  // Poisson offspring is representable, but P(N = 0) > 0 violates (A2).
  const auto c = parse_config(R"({"experiment": "slln", "model": {"family": "iid_product",
      "offspring": {"kind": "poisson", "lambda": 2}, "displacement": {"kind": "gaussian"}}})");
  EXPECT_THROW(PointProcessModel(c.model, c.cumulant), AssumptionViolated);
}

TEST(Config, ThetaParsing) {
  EXPECT_TRUE(parse_theta("theta0").is_theta0);
  EXPECT_EQ(parse_theta("0.25").value, 0.25);
  EXPECT_THROW(parse_theta("abc"), ConfigError);
  EXPECT_THROW(parse_theta("0"), ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}
