#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "lpm/experiments.hpp"

using namespace lpm;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = 4242;
  c.replications = 120;  // Gumbel fits need at least 100 samples
  c.ns = {6};
  c.knobs.e_arrays = 400;
  c.knobs.operator_draws = 2000;
  c.knobs.sigma_mc_samples = 5000;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lpm_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

}  // namespace

TEST(ParallelMap, KeepsIndexOrderAndRethrows) {
  const auto v = parallel_map(100, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
  EXPECT_THROW(parallel_map(50, 3,
                            [](std::size_t i) {
                              if (i == 17) throw std::runtime_error("boom");
                              return 0;
                            }),
               std::runtime_error);
  EXPECT_TRUE(parallel_map(0, 2, [](std::size_t) { return 1; }).empty());
}

TEST(Tables, CsvQuotingRoundTrips) {
  Table t{"x", {"a", "mu"}, {{"1", "uniform(0.5,1.5)"}, {"2", "delta(1)"}}};
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  std::ostringstream out;
  t.write_csv(out);
  EXPECT_EQ(out.str(), "a,mu\n1,\"uniform(0.5,1.5)\"\n2,delta(1)\n");
  detail::write_file(dir / "x.csv", out.str());
  const auto back = detail::read_csv(dir / "x.csv");
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(cell(0.1), "0.10000000000000001");
  EXPECT_EQ(cell(std::nan("")), "nan");
}

TEST(Experiments, ByteIdenticalAcrossThreadCounts) {
  for (auto kind : {ExperimentKind::CouplingCheck, ExperimentKind::Slln}) {
    auto cfg = small(kind);
    if (kind == ExperimentKind::Slln) cfg.ns = {4, 6};
    RunContext one, many;
    one.threads = 1;
    many.threads = 4;
    const auto a = scratch(std::string("rerun_a_") + to_string(kind));
    const auto b = scratch(std::string("rerun_b_") + to_string(kind));
    write_result(run_experiment(cfg, one), a);
    write_result(run_experiment(cfg, many), b);
    const auto ba = dir_bytes(a);
    const auto bb = dir_bytes(b);
    EXPECT_EQ(ba.size(), bb.size());
    for (const auto& [name, bytes] : ba) {
      ASSERT_TRUE(bb.count(name)) << name;
      EXPECT_EQ(bytes, bb.at(name)) << name;
    }
    EXPECT_TRUE(ba.count("config.json"));
    EXPECT_TRUE(ba.count("reports.json"));
  }
}

TEST(Experiments, SeedChangesOutput) {
  auto cfg = small(ExperimentKind::Slln);
  const auto a = run_experiment(cfg);
  cfg.seed += 1;
  const auto b = run_experiment(cfg);
  std::ostringstream sa, sb;
  a.tables.front().write_csv(sa);
  b.tables.front().write_csv(sb);
  EXPECT_NE(sa.str(), sb.str());
}

TEST(Experiments, ConfigEchoParsesBack) {
  const auto cfg = small(ExperimentKind::CouplingCheck);
  const auto res = run_experiment(cfg);
  EXPECT_EQ(config_from_json(res.config_echo).seed, cfg.seed);
  EXPECT_EQ(res.config_echo.dump(), to_json(cfg).dump());
}

TEST(Experiments, CapFailsBeforeSimulating) {
  auto cfg = small(ExperimentKind::Slln);
  cfg.ns = {40};
  std::atomic<int> saves{0};
  RunContext ctx;
  ctx.checkpoint = [&](const ExperimentResult&) { ++saves; };
  EXPECT_THROW(run_experiment(cfg, ctx), PopulationCapExceeded);
  EXPECT_EQ(saves.load(), 0);
}

TEST(Experiments, RegimeAndMuGuards) {
  auto cl = small(ExperimentKind::CenteredLimit);
  cl.thetas = {ThetaChoice::number(2.0)};
  EXPECT_THROW(run_experiment(cl), InvalidRegime);

  auto pp = small(ExperimentKind::PointProcess);
  pp.thetas = {ThetaChoice::number(0.5)};
  pp.mus = {MuLaw::uniform(0.5, 1.5)};
  EXPECT_THROW(run_experiment(pp), InvalidMu);
  pp.mus = {MuLaw::delta(1.0)};
  pp.thetas = {ThetaChoice::number(2.0)};
  EXPECT_THROW(run_experiment(pp), InvalidRegime);

  auto lc = small(ExperimentKind::LogCorrection);
  lc.thetas = {ThetaChoice::number(3.0)};
  lc.mus = {MuLaw::uniform(0.5, 1.5)};
  lc.ns = {4, 5, 6, 7};
  EXPECT_THROW(run_experiment(lc), InvalidRegime);

  auto rde = small(ExperimentKind::RdeCheck);
  rde.thetas = {ThetaChoice::theta0()};
  EXPECT_THROW(run_experiment(rde), InvalidRegime);

  auto unbounded = small(ExperimentKind::Slln);
  unbounded.model = ModelSpec{DeterministicAtoms{{1.0, -1.0}}};
  EXPECT_THROW(run_experiment(unbounded), RequiresFiniteTheta0);

  auto zero = small(ExperimentKind::Slln);
  zero.replications = 0;
  EXPECT_THROW(run_experiment(zero), ConfigError);
}

TEST(Experiments, CheckpointsEachCell) {
  auto cfg = small(ExperimentKind::Slln);
  cfg.ns = {3, 4, 5};
  int saves = 0;
  RunContext ctx;
  ctx.checkpoint = [&](const ExperimentResult& partial) {
    ++saves;
    EXPECT_FALSE(partial.tables.empty());
  };
  run_experiment(cfg, ctx);
  EXPECT_GE(saves, 3);
}

TEST(Experiments, SmallRunsProduceTablesAndReports) {
  struct Case {
    ExperimentKind kind;
    std::vector<int> ns;
    std::vector<std::string> tables;
  };
  const std::vector<Case> cases{
      {ExperimentKind::Slln, {4, 6}, {"slln", "growth"}},
      {ExperimentKind::CenteredLimit, {6, 8}, {"centered_limit", "y_over_w", "aidekon_shi"}},
      {ExperimentKind::LogCorrection, {4, 5, 6, 7}, {"log_correction", "slopes"}},
      {ExperimentKind::PointProcess, {6, 8}, {"point_process", "atoms", "top_atoms"}},
      {ExperimentKind::CouplingCheck, {6}, {"coupling_check", "conditional_samples"}},
      {ExperimentKind::RdeCheck, {6}, {"rde_check", "rde_samples"}},
  };
  for (const auto& c : cases) {
    auto cfg = small(c.kind);
    cfg.ns = c.ns;
    if (c.kind == ExperimentKind::PointProcess || c.kind == ExperimentKind::RdeCheck) {
      cfg.thetas = {ThetaChoice::number(0.5)};
      cfg.mus = {MuLaw::delta(1.0)};
    }
    if (c.kind == ExperimentKind::LogCorrection) cfg.mus = {MuLaw::delta(1.0)};
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.kind, c.kind);
    EXPECT_FALSE(res.acceptance.empty()) << to_string(c.kind);
    for (const auto& name : c.tables) {
      bool found = false;
      for (const auto& t : res.tables) {
        if (t.name == name) {
          found = true;
          EXPECT_FALSE(t.rows.empty()) << name;
          for (const auto& row : t.rows) EXPECT_EQ(row.size(), t.columns.size()) << name;
        }
      }
      EXPECT_TRUE(found) << name;
    }
  }
}

TEST(Experiments, RerenderReproducesSvgs) {
  auto cfg = small(ExperimentKind::CenteredLimit);
  cfg.ns = {6, 8};
  const auto dir = scratch("rerender");
  write_result(run_experiment(cfg), dir);
  const auto before = dir_bytes(dir);
  std::size_t svgs = 0;
  for (const auto& [name, bytes] : before) {
    if (name.ends_with(".svg")) {
      ++svgs;
      EXPECT_TRUE(bytes.starts_with("<svg")) << name;
      EXPECT_TRUE(bytes.ends_with("</svg>\n")) << name;
      fs::remove(dir / name);
    }
  }
  EXPECT_GE(svgs, 1u);
  EXPECT_EQ(rerender(dir), svgs);
  EXPECT_EQ(dir_bytes(dir), before);
}
