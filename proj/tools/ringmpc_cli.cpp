// Command-line front end: run, sweep, emit, validate.

#include "ringmpc/harness.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace ringmpc;

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kConfigError = 2, kSolverFailure = 3, kIntegrationFailure = 4 };

struct ScenarioFlags {
  std::string config;
  std::string preset;
  std::optional<int> nsat, ndeorbit, neighbors, horizon, nloops, maxIterations;
  std::optional<std::string> controller, output;
  std::optional<double> sampleTime, uMax, mass, altitude, messageLoss, tolerance;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON scenario file");
    app->add_option("--preset", preset, "default or desk")->check(CLI::IsMember({"default", "desk"}));
    app->add_option("--nsat", nsat, "Spacecraft in the initial ring");
    app->add_option("--ndeorbit", ndeorbit, "Spacecraft removed at start");
    app->add_option("-p,--neighbors", neighbors, "Neighbor count |N| (even)");
    app->add_option("--controller", controller, "CentMPC, FD-MPC or DMPC-IS");
    app->add_option("--horizon", horizon, "Prediction horizon Np");
    app->add_option("--ts", sampleTime, "Sample time [s]");
    app->add_option("--nloops", nloops, "Closed-loop steps");
    app->add_option("--u-max", uMax, "Thrust bound per axis [N]");
    app->add_option("--mass", mass, "Spacecraft mass [kg]");
    app->add_option("--altitude", altitude, "Orbit altitude [m]");
    app->add_option("--seed", seed, "Scenario seed");
    app->add_option("--message-loss", messageLoss, "Trajectory message drop probability");
    app->add_option("--qp-tol", tolerance, "QP stationarity tolerance");
    app->add_option("--qp-max-iter", maxIterations, "QP iteration limit");
    app->add_option("-o,--output", output, "Output directory");
  }

  ScenarioConfig resolve() const {
    ScenarioConfig c = preset == "desk" ? ScenarioConfig::deskPreset() : ScenarioConfig{};
    if (!config.empty()) c = ScenarioConfig::load(config, c);
    if (nsat) c.nsat = *nsat;
    if (ndeorbit) c.ndeorbit = *ndeorbit;
    if (neighbors) c.neighborCount = *neighbors;
    if (controller) c.controller = parseControllerKind(*controller);
    if (horizon) c.horizon = *horizon;
    if (sampleTime) c.sampleTime = *sampleTime;
    if (nloops) c.nloops = *nloops;
    if (uMax) c.uMax = *uMax;
    if (mass) c.mass = *mass;
    if (altitude) c.altitude = *altitude;
    if (seed) c.seed = *seed;
    if (messageLoss) c.messageLoss = *messageLoss;
    if (tolerance) c.qp.tolerance = *tolerance;
    if (maxIterations) c.qp.maxIterations = *maxIterations;
    if (output) c.outputDir = *output;
    c.validate();
    return c;
  }
};

std::ofstream openOut(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmdRun(const ScenarioFlags& flags, bool quiet) {
  const ScenarioConfig cfg = flags.resolve();
  const auto dir = resolveOutputDir(cfg);
  std::filesystem::create_directories(dir);
  const RunRecord rec = runClosedLoop(cfg, [&](int k) {
    if (!quiet && (k + 1) % 50 == 0) std::cerr << "step " << k + 1 << "/" << cfg.nloops << '\n';
  });
  const OrbitParams orbit = cfg.orbit();
  const RunSummary s = summarize(rec, orbit);
  const std::string stem = "run_" + rec.meta.controller + "_p" + std::to_string(cfg.neighborCount) + "_seed" +
                           std::to_string(cfg.seed);
  {
    auto out = openOut(dir / (stem + ".csv"));
    writeRunCsv(out, rec);
  }
  std::cout << rec.meta.controller << " |N|=" << cfg.neighborCount << " survivors=" << rec.spacecraftCount()
            << " muSim=" << s.muSim << " km maxErr=" << s.maxErr << " km totalInput=" << s.totalInput
            << " m/s solve=" << s.solveSeconds << " s orbitsToConverge=" << s.orbitsToConverge << '\n'
            << "log: " << (dir / (stem + ".csv")).string() << '\n';
  return kOk;
}

int cmdSweep(const ScenarioFlags& flags, int scenarios, const std::vector<int>& counts,
             const std::vector<std::string>& controllers, bool records) {
  const ScenarioConfig base = flags.resolve();
  SweepSpec spec;
  spec.scenarios = scenarios;
  if (!counts.empty()) spec.neighborCounts = counts;
  if (!controllers.empty()) {
    spec.controllers.clear();
    for (const auto& c : controllers) spec.controllers.push_back(parseControllerKind(c));
  }
  const auto dir = resolveOutputDir(base);
  std::filesystem::create_directories(dir);
  const OrbitParams orbit = base.orbit();
  const SweepResult result = runSweep(spec, base, [&](const RunRecord& rec, const RunSummary& s) {
    std::cerr << s.controller << " |N|=" << s.neighborCount << " scenario " << s.scenario << ": muSim=" << s.muSim
              << " km totalInput=" << s.totalInput << " solve=" << s.solveSeconds << " s\n";
    if (records) {
      auto out = openOut(dir / ("run_" + s.controller + "_p" + std::to_string(s.neighborCount) + "_s" +
                                std::to_string(s.scenario) + ".csv"));
      writeRunCsv(out, rec);
    }
  });
  {
    auto out = openOut(dir / "summary.json");
    writeSummaryJson(out, result.table);
  }
  emitPlotData(PlotKind::ErrorVsNeighbors, dir, nullptr, &result.table, orbit);
  std::cout << "controller";
  for (int p : result.table.neighborCounts) std::cout << "  |N|=" << p;
  std::cout << '\n';
  for (const auto& c : result.table.controllers) {
    std::cout << c;
    for (const BatchStats& b : result.table.cells.at(c)) {
      std::cout << "  " << b.positionError.mean << "+-" << b.positionError.std;
    }
    std::cout << '\n';
  }
  std::cout << "summary: " << (dir / "summary.json").string() << '\n';
  return kOk;
}

int cmdEmit(const std::string& kindName, const std::string& runCsv, const std::string& summary,
            const std::string& outDir) {
  const PlotKind kind = parsePlotKind(kindName);
  ScenarioConfig cfg;
  if (!outDir.empty()) cfg.outputDir = outDir;
  const auto dir = resolveOutputDir(cfg);
  std::filesystem::path path;
  if (kind == PlotKind::ErrorVsNeighbors) {
    if (summary.empty()) throw ConfigError("error-vs-neighbors needs --summary");
    std::ifstream in(summary);
    if (!in) throw ConfigError("cannot open " + summary);
    const SummaryTable table = readSummaryJson(in);
    path = emitPlotData(kind, dir, nullptr, &table, cfg.orbit());
  } else {
    if (runCsv.empty()) throw ConfigError(kindName + " needs --run");
    std::ifstream in(runCsv);
    if (!in) throw ConfigError("cannot open " + runCsv);
    const RunRecord rec = readRunCsv(in);
    OrbitParams orbit = OrbitParams::fromRadius(rec.meta.chiefRadius);
    path = emitPlotData(kind, dir, &rec, nullptr, orbit);
  }
  std::cout << path.string() << '\n';
  return kOk;
}

int cmdValidate(const ScenarioFlags& flags) {
  ScenarioFlags f = flags;
  if (f.preset.empty() && f.config.empty()) f.preset = "desk";
  const ScenarioConfig cfg = f.resolve();
  bool ok = true;
  for (const InvariantResult& r : validateInvariants(cfg)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constellation reconfiguration MPC simulator"};
  app.require_subcommand(1);

  ScenarioFlags runFlags, sweepFlags, validateFlags;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Simulate one scenario and write its log");
  runFlags.attach(run);
  run->add_flag("-q,--quiet", quiet, "No progress output");

  int scenarios = 10;
  std::vector<int> counts;
  std::vector<std::string> controllers;
  bool records = false;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo batch over controllers and neighbor counts");
  sweepFlags.attach(sweep);
  sweep->add_option("--scenarios", scenarios, "Number of paired scenarios");
  sweep->add_option("--neighbor-counts", counts, "List of |N| values")->delimiter(',');
  sweep->add_option("--controllers", controllers, "List of controllers")->delimiter(',');
  sweep->add_flag("--records", records, "Also write every run log");

  std::string kind, runCsv, summary, emitDir;
  auto* emit = app.add_subcommand("emit", "Write plot data from a run log or sweep summary");
  emit->add_option("kind", kind, "angular-deviation, per-sat-input or error-vs-neighbors")->required();
  emit->add_option("--run", runCsv, "Run log CSV");
  emit->add_option("--summary", summary, "Sweep summary JSON");
  emit->add_option("-o,--output", emitDir, "Output directory");

  auto* validate = app.add_subcommand("validate", "Check the invariant suite (desk preset by default)");
  validateFlags.attach(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmdRun(runFlags, quiet);
    if (*sweep) return cmdSweep(sweepFlags, scenarios, counts, controllers, records);
    if (*emit) return cmdEmit(kind, runCsv, summary, emitDir);
    if (*validate) return cmdValidate(validateFlags);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SimulationError& e) {
    std::cerr << "simulation failed at step " << e.step() << ": " << e.what() << '\n';
    return e.kind() == SimulationError::Kind::Solver ? kSolverFailure : kIntegrationFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
