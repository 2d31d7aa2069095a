// lpmbrw: constants, single-trajectory dumps, experiments and plot re-rendering
// for last-progeny-modified branching random walks.
//
// Exit codes: 0 ok, 1 an acceptance test failed, 2 configuration or model
// assumption error, 3 population cap or numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpm/config.hpp"
#include "lpm/engine.hpp"
#include "lpm/error.hpp"
#include "lpm/experiments.hpp"
#include "lpm/model.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTestFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCapOrNumeric = 3;

constexpr const char* kOutputDirEnv = "LPMBRW_OUTPUT_DIR";

struct ModelArgs {
  std::string config_path;
  std::string model_json;
};

// Model from --model (inline JSON or a file holding it), else from the config
// file's "model" record, else binary branching with Gaussian(0, 1) steps.
lpm::PointProcessModel load_model(const ModelArgs& args) {
  lpm::CumulantMode mode = lpm::AnalyticCumulant{};
  if (!args.model_json.empty()) {
    std::string text = args.model_json;
    if (std::filesystem::exists(text)) text = lpm::read_text_file(text);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw lpm::ConfigError(std::string("model is not valid JSON: ") + e.what());
    }
    auto spec = lpm::model_from_json(j, &mode);
    return lpm::PointProcessModel(std::move(spec), mode);
  }
  if (!args.config_path.empty()) {
    const auto cfg = lpm::load_config(args.config_path);
    return lpm::PointProcessModel(cfg.model, cfg.cumulant);
  }
  lpm::ExperimentConfig defaults;
  return lpm::PointProcessModel(defaults.model, defaults.cumulant);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

int cmd_constants(const ModelArgs& margs, std::uint64_t seed) {
  const auto model = load_model(margs);
  std::cout << "model: " << lpm::model_to_json(model.spec()).dump() << "\n";
  std::cout << "nu grid:\n";
  for (double theta = 0.25; theta <= 3.0 + 1e-12; theta += 0.25) {
    std::cout << "  theta=" << fmt(theta) << "  nu=" << fmt(model.nu(theta)) << "\n";
  }
  const auto r = model.theta0();
  if (const auto* un = std::get_if<lpm::Theta0Unbounded>(&r)) {
    std::cout << "theta0: unbounded within search_max=" << fmt(un->search_max) << "\n";
    return kExitOk;
  }
  const auto& f = std::get<lpm::Theta0Finite>(r);
  lpm::RngStream rng(seed, lpm::derive_stream_id({0x636f6e7374ULL}));
  std::cout << "theta0: " << fmt(f.theta0) << "\n";
  std::cout << "nu(theta0)/theta0: " << fmt(f.nu_theta0 / f.theta0) << "\n";
  std::cout << "1/(2 theta0): " << fmt(0.5 / f.theta0) << "\n";
  std::cout << "3/(2 theta0): " << fmt(1.5 / f.theta0) << "\n";
  std::cout << "sigma^2: " << fmt(lpm::sigma_sq(model, 200000, rng)) << "\n";
  return kExitOk;
}

int cmd_simulate(const ModelArgs& margs, int n, std::uint64_t seed, const std::vector<std::string>& thetas,
                 std::size_t cap, const std::string& output) {
  const auto model = load_model(margs);
  std::vector<double> grid;
  for (const auto& t : thetas) {
    const auto c = lpm::parse_theta(t);
    if (c.is_theta0) {
      const auto t0 = model.finite_theta0();
      if (!t0) throw lpm::RequiresFiniteTheta0();
      grid.push_back(*t0);
    } else {
      grid.push_back(c.value);
    }
  }
  const double expected = lpm::expected_population(model, n);
  if (expected > static_cast<double>(cap)) throw lpm::PopulationCapExceeded(n, expected, cap);
  lpm::RngStream rng(seed, lpm::derive_stream_id({0x73696dULL, static_cast<std::uint64_t>(n)}));
  lpm::SimulationOptions opts;
  opts.cap = cap;
  opts.theta_grid = grid;
  const auto traj = lpm::simulate(model, n, rng, opts);
  if (output.empty() || output == "-") {
    traj.write_csv(std::cout);
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) throw lpm::ConfigError("cannot write '" + output + "'");
    traj.write_csv(out);
  }
  return kExitOk;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::vector<int> ns;
  std::vector<std::string> thetas;
  std::optional<std::size_t> replications;
  std::string output_dir;
};

int cmd_experiment(const std::string& path, const Overrides& ov, unsigned threads, int verbosity) {
  const std::string raw = lpm::read_text_file(path);
  auto cfg = lpm::parse_config(raw);
  if (ov.seed) cfg.seed = *ov.seed;
  if (!ov.ns.empty()) cfg.ns = ov.ns;
  if (!ov.thetas.empty()) {
    cfg.thetas.clear();
    for (const auto& t : ov.thetas) cfg.thetas.push_back(lpm::parse_theta(t));
  }
  if (ov.replications) cfg.replications = *ov.replications;
  if (!ov.output_dir.empty()) {
    cfg.output_dir = ov.output_dir;
  } else if (cfg.output_dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    cfg.output_dir = env && *env ? env : "results";
  }
  lpm::validate(cfg);

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  lpm::detail::write_file(dir / "config.input.json", raw);
  std::ofstream log(dir / "run.log");

  lpm::RunContext ctx;
  ctx.threads = threads;
  ctx.log = [&](const std::string& msg) {
    log << msg << "\n";
    if (verbosity > 0) std::cerr << msg << "\n";
  };
  // Completed cells are written as they finish; a later failure keeps them.
  ctx.checkpoint = [&](const lpm::ExperimentResult& partial) {
    for (const auto& t : partial.tables) {
      std::ofstream out(dir / (t.name + ".csv"), std::ios::binary);
      t.write_csv(out);
    }
  };

  lpm::ExperimentResult res;
  try {
    res = lpm::run_experiment(cfg, ctx);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    throw;
  }
  lpm::write_result(res, dir);
  log << "experiment: " << lpm::to_string(res.kind) << "\n";
  log << "threads: " << lpm::resolve_threads(threads) << "\n";
  log << "wall_seconds: " << res.wall_seconds << "\n";
  for (const auto& r : res.acceptance) {
    const std::string line = std::string(r.pass ? "PASS " : "FAIL ") + r.name + " statistic=" + fmt(r.statistic) +
                             (r.p_value ? " p=" + fmt(*r.p_value) : "");
    log << line << "\n";
    if (verbosity > 0 || !r.pass) std::cout << line << "\n";
  }
  std::cout << (res.passed() ? "all acceptance checks passed" : "acceptance checks failed") << " ("
            << res.acceptance.size() << " checks), results in " << dir.string() << "\n";
  return res.passed() ? kExitOk : kExitTestFailed;
}

int cmd_report(const std::string& dir) {
  const auto count = lpm::rerender(dir);
  std::cout << "rendered " << count << " plot(s) in " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification toolkit for last-progeny-modified branching random walks"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "Print progress and every check");

  ModelArgs margs;
  std::uint64_t seed = 1;

  auto* constants = app.add_subcommand("constants", "Print nu on a grid, theta0 and derived constants");
  constants->add_option("--config", margs.config_path, "Experiment config whose model is used");
  constants->add_option("--model", margs.model_json, "Model record as JSON text or a path to it");
  constants->add_option("--seed", seed, "Seed for Monte Carlo constants");

  int sim_n = 10;
  std::vector<std::string> sim_thetas;
  std::size_t sim_cap = lpm::kDefaultPopulationCap;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Simulate one trajectory and dump per-generation summaries as CSV");
  simulate->add_option("--config", margs.config_path, "Experiment config whose model is used");
  simulate->add_option("--model", margs.model_json, "Model record as JSON text or a path to it");
  simulate->add_option("--n", sim_n, "Number of generations")->check(CLI::NonNegativeNumber);
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--theta", sim_thetas, "theta values for log W_k (number or theta0); repeatable");
  simulate->add_option("--cap", sim_cap, "Population cap");
  simulate->add_option("-o,--output", sim_out, "Output CSV path (default stdout)");

  std::string config_path;
  Overrides ov;
  std::uint64_t seed_override = 0;
  std::size_t reps_override = 0;
  unsigned threads = 0;
  auto* experiment = app.add_subcommand("experiment", "Run the experiment described by a JSON config");
  experiment->add_option("config", config_path, "Path to the experiment config")->required();
  auto* seed_opt = experiment->add_option("--seed", seed_override, "Override the master seed");
  experiment->add_option("--n", ov.ns, "Override the n list; repeatable");
  experiment->add_option("--theta", ov.thetas, "Override the theta list (number or theta0); repeatable");
  auto* reps_opt = experiment->add_option("--replications", reps_override, "Override replications per cell");
  experiment->add_option("--output-dir", ov.output_dir,
                         std::string("Output directory (default: config, then $") + kOutputDirEnv + ", then results)");
  experiment->add_option("--threads", threads, "Worker threads (default: all cores)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-render the plots of a results directory from its CSV files");
  report->add_option("dir", report_dir, "Results directory")->required();

  for (auto* sub : {constants, simulate, experiment, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (*seed_opt) ov.seed = seed_override;
  if (*reps_opt) ov.replications = reps_override;

  try {
    if (*constants) return cmd_constants(margs, seed);
    if (*simulate) return cmd_simulate(margs, sim_n, seed, sim_thetas, sim_cap, sim_out);
    if (*experiment) return cmd_experiment(config_path, ov, threads, verbosity);
    if (*report) return cmd_report(report_dir);
  } catch (const lpm::PopulationCapExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCapOrNumeric;
  } catch (const lpm::NumericFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCapOrNumeric;
  } catch (const lpm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
