#include "ringmpc/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace ringmpc {

namespace {

using nlohmann::json;

// message-loss draws use a stream independent of the deorbit draw
constexpr std::uint64_t kLossStream = 0x9e3779b97f4a7c15ULL;

template <class T>
void readKey(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void rejectUnknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!k.count(key)) throw ConfigError("unknown configuration key '" + where + key + "'");
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ScenarioConfig::validate() const {
  try {
    if (nsat < 2) throw ConfigError("nsat must be at least 2");
    if (ndeorbit < 0 || ndeorbit > nsat - 2) throw ConfigError("ndeorbit must leave at least two spacecraft");
    if (neighborCount < 2 || neighborCount % 2 != 0) throw ConfigError("neighbor_count must be even and at least 2");
    if (neighborCount / 2 >= nsat - ndeorbit) throw ConfigError("neighbor_count too large for the survivors");
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    if (!(sampleTime > 0.0) || !std::isfinite(sampleTime)) throw ConfigError("sample_time must be positive");
    if (nloops < 1) throw ConfigError("nloops must be at least 1");
    if (!(uMax > 0.0)) throw ConfigError("u_max must be positive");
    if (!(mass > 0.0)) throw ConfigError("mass must be positive");
    if (!(messageLoss >= 0.0 && messageLoss <= 1.0)) throw ConfigError("message_loss must lie in [0, 1]");
    if (!(qp.tolerance > 0.0) || qp.maxIterations < 1) throw ConfigError("invalid solver settings");
    weights.validate();
    integrator.validate();
    (void)orbit();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

OrbitParams ScenarioConfig::orbit() const { return OrbitParams::fromAltitude(altitude); }

ScenarioConfig ScenarioConfig::deskPreset() {
  ScenarioConfig c;
  c.nsat = 12;
  c.ndeorbit = 2;
  c.nloops = 96;
  c.horizon = 32;
  return c;
}

ScenarioConfig ScenarioConfig::fromJson(const std::string& text, const ScenarioConfig& base) {
  ScenarioConfig c = base;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    rejectUnknown(j,
                  {"nsat", "ndeorbit", "neighbor_count", "controller", "horizon", "sample_time", "nloops",
                   "weights", "u_max", "mass", "altitude", "integrator", "qp", "seed", "message_loss",
                   "output_dir", "preset"},
                  "");
    if (j.contains("preset")) {
      const std::string p = j.at("preset").get<std::string>();
      if (p == "desk") {
        c = deskPreset();
      } else if (p != "default") {
        throw ConfigError("unknown preset '" + p + "'");
      }
    }
    readKey(j, "nsat", c.nsat);
    readKey(j, "ndeorbit", c.ndeorbit);
    readKey(j, "neighbor_count", c.neighborCount);
    if (j.contains("controller")) c.controller = parseControllerKind(j.at("controller").get<std::string>());
    readKey(j, "horizon", c.horizon);
    readKey(j, "sample_time", c.sampleTime);
    readKey(j, "nloops", c.nloops);
    readKey(j, "u_max", c.uMax);
    readKey(j, "mass", c.mass);
    readKey(j, "altitude", c.altitude);
    readKey(j, "seed", c.seed);
    readKey(j, "message_loss", c.messageLoss);
    readKey(j, "output_dir", c.outputDir);
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      rejectUnknown(w, {"alpha_rho", "alpha_theta", "alpha_u", "alpha_end", "rho_unit"}, "weights.");
      readKey(w, "alpha_rho", c.weights.alphaRho);
      readKey(w, "alpha_theta", c.weights.alphaTheta);
      readKey(w, "alpha_u", c.weights.alphaU);
      readKey(w, "alpha_end", c.weights.alphaEnd);
      readKey(w, "rho_unit", c.weights.rhoUnit);
    }
    if (j.contains("integrator")) {
      const json& i = j.at("integrator");
      rejectUnknown(i, {"rel_tol", "abs_tol", "max_step"}, "integrator.");
      readKey(i, "rel_tol", c.integrator.relTol);
      readKey(i, "abs_tol", c.integrator.absTol);
      readKey(i, "max_step", c.integrator.maxStep);
    }
    if (j.contains("qp")) {
      const json& q = j.at("qp");
      rejectUnknown(q, {"tolerance", "max_iterations"}, "qp.");
      readKey(q, "tolerance", c.qp.tolerance);
      readKey(q, "max_iterations", c.qp.maxIterations);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path, const ScenarioConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return fromJson(ss.str(), base);
}

ScenarioConfig ScenarioConfig::fromJson(const std::string& text) { return fromJson(text, ScenarioConfig{}); }

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) { return load(path, ScenarioConfig{}); }

std::string ScenarioConfig::toJson() const {
  json j = {{"nsat", nsat},
            {"ndeorbit", ndeorbit},
            {"neighbor_count", neighborCount},
            {"controller", toString(controller)},
            {"horizon", horizon},
            {"sample_time", sampleTime},
            {"nloops", nloops},
            {"weights",
             {{"alpha_rho", weights.alphaRho},
              {"alpha_theta", weights.alphaTheta},
              {"alpha_u", weights.alphaU},
              {"alpha_end", weights.alphaEnd},
              {"rho_unit", weights.rhoUnit}}},
            {"u_max", uMax},
            {"mass", mass},
            {"altitude", altitude},
            {"integrator",
             {{"rel_tol", integrator.relTol}, {"abs_tol", integrator.absTol}, {"max_step", integrator.maxStep}}},
            {"qp", {{"tolerance", qp.tolerance}, {"max_iterations", qp.maxIterations}}},
            {"seed", seed},
            {"message_loss", messageLoss},
            {"output_dir", outputDir}};
  return j.dump(2);
}

RunRecord runClosedLoop(const ScenarioConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  const OrbitParams orbit = cfg.orbit();
  const DiscreteModel model = discretize(buildContinuousModel(orbit), cfg.sampleTime);
  const DeorbitEvent event = drawDeorbit(cfg.nsat, cfg.ndeorbit, cfg.seed);
  const RingTopology ring = applyDeorbit(RingTopology(cfg.nsat, cfg.neighborCount), event);
  const std::vector<CylindricalState> slots = initialRing(cfg.nsat, orbit);
  const int m = ring.size();

  std::vector<InertialState> truth;
  for (int id : ring.order()) {
    const auto [r, v] = cylindricalToEci(slots[id], chiefAngleAt(0.0, orbit), orbit);
    truth.push_back({r, v});
  }

  RunRecord rec;
  rec.meta = {toString(cfg.controller), cfg.nsat, cfg.ndeorbit, cfg.neighborCount, cfg.horizon,
              cfg.nloops, cfg.sampleTime, cfg.mass, cfg.uMax, orbit.chiefRadius, orbit.meanMotion,
              cfg.seed};
  rec.ids = ring.order();
  rec.removed = event.removed;

  std::unique_ptr<LocalMpc> local;
  std::unique_ptr<CentralizedMpc> cent;
  if (cfg.controller == ControllerKind::Centralized) {
    cent = std::make_unique<CentralizedMpc>(model, cfg.weights, cfg.horizon,
                                            std::vector<double>(static_cast<std::size_t>(m), cfg.mass),
                                            cfg.uMax, ring.neighborPositions(), cfg.qp);
  } else {
    local = std::make_unique<LocalMpc>(model, cfg.weights, cfg.horizon, cfg.mass, cfg.uMax, cfg.qp);
  }
  InformationExchange info(ring, cfg.controller, cfg.horizon, cfg.sampleTime, cfg.messageLoss,
                           cfg.seed ^ kLossStream);
  std::vector<std::optional<VectorXd>> warm(static_cast<std::size_t>(m));
  std::optional<VectorXd> centWarm;

  auto measure = [&](int step) {
    std::vector<CylindricalState> states;
    const double chief = chiefAngleAt(step * cfg.sampleTime, orbit);
    try {
      for (const InertialState& s : truth) states.push_back(eciToCylindrical(s.r, s.v, chief, orbit));
    } catch (const FrameDegeneracyError& e) {
      throw SimulationError(SimulationError::Kind::Integration, step, e.what());
    }
    return states;
  };

  rec.steps.reserve(static_cast<std::size_t>(cfg.nloops));
  for (int k = 0; k < cfg.nloops; ++k) {
    StepRecord step;
    step.states = measure(k);
    std::vector<ControlPlan> plans;
    try {
      if (cent) {
        CentralizedResult res = cent->solve(step.states, centWarm);
        centWarm = res.qp.dual;
        step.solveSeconds.assign(static_cast<std::size_t>(m), res.solveSeconds / m);
        step.iterations.assign(static_cast<std::size_t>(m), res.qp.iterations);
        plans = std::move(res.plans);
      } else {
        const std::vector<NeighborInfo> infos = info.gather(k, step.states);
        for (int i = 0; i < m; ++i) {
          ControlPlan p = cfg.controller == ControllerKind::FullyDecentralized
                              ? local->solveFd(step.states[i], infos[i], warm[i])
                              : local->solveDmpcIs(step.states[i], infos[i], warm[i]);
          warm[i] = p.qp.dual;
          step.solveSeconds.push_back(p.solveSeconds);
          step.iterations.push_back(p.qp.iterations);
          plans.push_back(std::move(p));
        }
        info.publish(k, plans);
      }
    } catch (const SolverError& e) {
      throw SimulationError(SimulationError::Kind::Solver, k, e.what());
    }

    for (int i = 0; i < m; ++i) {
      step.applied.push_back(plans[i].first());
      try {
        truth[i] = propagateTruth(truth[i], plans[i].first(), cfg.mass, cfg.sampleTime, cfg.integrator, orbit);
      } catch (const IntegrationError& e) {
        throw SimulationError(SimulationError::Kind::Integration, k,
                              std::string(e.what()) + " for spacecraft " + std::to_string(ring.order()[i]));
      }
    }
    rec.steps.push_back(std::move(step));
    if (observer) observer(k);
  }
  rec.finalStates = measure(cfg.nloops);
  rec.lostMessages = info.lostMessages();
  rec.degradedTracks = info.degradedTracks();
  return rec;
}

void SweepSpec::validate() const {
  if (neighborCounts.empty() || controllers.empty() || scenarios < 1) {
    throw ConfigError("sweep needs neighbor counts, controllers and at least one scenario");
  }
}

SweepResult runSweep(const SweepSpec& spec, const ScenarioConfig& base, const RunSink& sink) {
  spec.validate();
  base.validate();
  const OrbitParams orbit = base.orbit();
  SweepResult out;
  for (int s = 0; s < spec.scenarios; ++s) {
    for (ControllerKind c : spec.controllers) {
      for (int p : spec.neighborCounts) {
        ScenarioConfig cfg = base;
        cfg.seed = spec.seedFor(base, s);
        cfg.controller = c;
        cfg.neighborCount = p;
        RunRecord rec;
        try {
          rec = runClosedLoop(cfg);
        } catch (const SimulationError& e) {
          throw SimulationError(e.kind(), e.step(),
                                toString(c) + " |N|=" + std::to_string(p) + " scenario " +
                                    std::to_string(s) + ": " + e.what());
        }
        RunSummary summary = summarize(rec, orbit, s);
        if (sink) sink(rec, summary);
        out.runs.push_back(std::move(summary));
      }
    }
  }
  out.table.neighborCounts = spec.neighborCounts;
  for (ControllerKind c : spec.controllers) {
    const std::string name = toString(c);
    out.table.controllers.push_back(name);
    auto& row = out.table.cells[name];
    for (int p : spec.neighborCounts) {
      std::vector<RunSummary> cell;
      for (const RunSummary& r : out.runs) {
        if (r.controller == name && r.neighborCount == p) cell.push_back(r);
      }
      row.push_back(aggregate(cell));
    }
  }
  return out;
}

PlotKind parsePlotKind(const std::string& name) {
  if (name == "angular-deviation") return PlotKind::AngularDeviation;
  if (name == "per-sat-input") return PlotKind::PerSatInput;
  if (name == "error-vs-neighbors") return PlotKind::ErrorVsNeighbors;
  throw std::invalid_argument("unknown plot kind '" + name + "'");
}

std::string toString(PlotKind kind) {
  switch (kind) {
    case PlotKind::AngularDeviation: return "angular-deviation";
    case PlotKind::PerSatInput: return "per-sat-input";
    case PlotKind::ErrorVsNeighbors: return "error-vs-neighbors";
  }
  return "unknown";
}

void writeAngularDeviation(std::ostream& os, const RunRecord& rec, const OrbitParams& params) {
  const Eigen::MatrixXd dev = angularDeviationSeries(rec);
  os << "# controller=" << rec.meta.controller << "\n# neighbor_count=" << rec.meta.neighborCount << '\n';
  os << "step orbit id deviation_rad\n";
  for (Eigen::Index k = 0; k < dev.rows(); ++k) {
    const double orbit = static_cast<double>(k + 1) * rec.meta.sampleTime / params.period;
    for (Eigen::Index i = 0; i < dev.cols(); ++i) {
      os << k + 1 << ' ' << num(orbit) << ' ' << rec.ids[i] << ' ' << num(dev(k, i)) << '\n';
    }
  }
}

void writePerSatInput(std::ostream& os, const RunSummary& run, int slotCount) {
  os << "# controller=" << run.controller << "\n# neighbor_count=" << run.neighborCount << '\n';
  os << "slot deorbited total_input\n";
  for (int slot = 0; slot < slotCount; ++slot) {
    const auto it = std::find(run.ids.begin(), run.ids.end(), slot);
    if (it == run.ids.end()) {
      os << slot << " 1 0\n";
    } else {
      os << slot << " 0 " << num(run.inputPerSpacecraft[static_cast<std::size_t>(it - run.ids.begin())]) << '\n';
    }
  }
}

void writeErrorVsNeighbors(std::ostream& os, const SummaryTable& table) {
  os << "# log_scale=true\n";
  os << "controller neighbors mean_km std_km\n";
  for (const std::string& c : table.controllers) {
    for (std::size_t k = 0; k < table.neighborCounts.size(); ++k) {
      const BatchStats& b = table.cells.at(c)[k];
      os << c << ' ' << table.neighborCounts[k] << ' ' << num(b.positionError.mean) << ' '
         << num(b.positionError.std) << '\n';
    }
  }
}

std::filesystem::path emitPlotData(PlotKind kind, const std::filesystem::path& dir, const RunRecord* rec,
                                   const SummaryTable* table, const OrbitParams& params) {
  std::filesystem::create_directories(dir);
  std::filesystem::path path;
  std::ofstream out;
  auto open = [&](const std::string& name) {
    path = dir / name;
    out.open(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
  };
  switch (kind) {
    case PlotKind::AngularDeviation:
      if (!rec) throw std::invalid_argument("angular-deviation needs a run record");
      open("angular_deviation_" + rec->meta.controller + ".txt");
      writeAngularDeviation(out, *rec, params);
      break;
    case PlotKind::PerSatInput: {
      if (!rec) throw std::invalid_argument("per-sat-input needs a run record");
      open("per_sat_input_" + rec->meta.controller + ".txt");
      RunSummary s = summarize(*rec, params);
      writePerSatInput(out, s, rec->meta.nsat);
      break;
    }
    case PlotKind::ErrorVsNeighbors:
      if (!table) throw std::invalid_argument("error-vs-neighbors needs a summary table");
      open("error_vs_neighbors.txt");
      writeErrorVsNeighbors(out, *table);
      break;
  }
  return path;
}

bool sameTrajectories(const RunRecord& a, const RunRecord& b) {
  auto sameStates = [](const std::vector<CylindricalState>& x, const std::vector<CylindricalState>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].vector() != y[i].vector()) return false;
    }
    return true;
  };
  if (a.ids != b.ids || a.removed != b.removed || a.steps.size() != b.steps.size()) return false;
  if (!sameStates(a.finalStates, b.finalStates)) return false;
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    const StepRecord& s = a.steps[k];
    const StepRecord& t = b.steps[k];
    if (!sameStates(s.states, t.states) || s.iterations != t.iterations) return false;
    for (std::size_t i = 0; i < s.applied.size(); ++i) {
      if (s.applied[i].vector() != t.applied[i].vector()) return false;
    }
  }
  return true;
}

std::vector<InvariantResult> validateInvariants(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<InvariantResult> out;
  const OrbitParams orbit = cfg.orbit();
  const DiscreteModel model = discretize(buildContinuousModel(orbit), cfg.sampleTime);
  const RingTopology ring =
      applyDeorbit(RingTopology(cfg.nsat, cfg.neighborCount), drawDeorbit(cfg.nsat, cfg.ndeorbit, cfg.seed));
  out.push_back({"neighbor symmetry", ring.isSymmetric(), std::to_string(ring.size()) + " survivors"});

  // Rotational invariance on the first-step states of the scenario, with one
  // round of trajectory sharing so the DMPC-IS path sees real predictions.
  {
    ScenarioConfig one = cfg;
    one.nloops = 1;
    one.controller = ControllerKind::FullyDecentralized;
    const RunRecord r = runClosedLoop(one);
    const std::vector<CylindricalState> base = r.finalStates;
    const double shift = 0.7;
    std::vector<CylindricalState> rotated = base;
    for (auto& x : rotated) x.theta = wrapAngle(x.theta + shift);

    const LocalMpc local(model, cfg.weights, cfg.horizon, cfg.mass, cfg.uMax, cfg.qp);
    const CentralizedMpc cent(model, cfg.weights, cfg.horizon,
                              std::vector<double>(static_cast<std::size_t>(ring.size()), cfg.mass), cfg.uMax,
                              ring.neighborPositions(), cfg.qp);
    auto solveAll = [&](const std::vector<CylindricalState>& states) {
      std::vector<std::vector<ControlPlan>> plans(3);
      InformationExchange fdx(ring, ControllerKind::FullyDecentralized, cfg.horizon, cfg.sampleTime);
      const auto fdInfo = fdx.gather(0, states);
      for (int i = 0; i < ring.size(); ++i) plans[0].push_back(local.solveFd(states[i], fdInfo[i]));
      InformationExchange isx(ring, ControllerKind::InformationSharing, cfg.horizon, cfg.sampleTime);
      isx.publish(0, plans[0]);
      const auto isInfo = isx.gather(1, states);
      for (int i = 0; i < ring.size(); ++i) plans[1].push_back(local.solveDmpcIs(states[i], isInfo[i]));
      plans[2] = cent.solve(states).plans;
      return plans;
    };
    const auto a = solveAll(base);
    const auto b = solveAll(rotated);
    const char* names[] = {"FD-MPC", "DMPC-IS", "CentMPC"};
    for (int c = 0; c < 3; ++c) {
      double diff = 0.0;
      for (std::size_t i = 0; i < a[c].size(); ++i) {
        diff = std::max(diff, (a[c][i].qp.uStar - b[c][i].qp.uStar).cwiseAbs().maxCoeff());
      }
      const double tol = 1e-6 * cfg.uMax;
      out.push_back({std::string("rotational invariance ") + names[c], diff <= tol,
                     "max input difference " + num(diff) + " N"});
    }
  }

  for (ControllerKind c : {ControllerKind::Centralized, ControllerKind::FullyDecentralized,
                           ControllerKind::InformationSharing}) {
    ScenarioConfig run = cfg;
    run.controller = c;
    const RunRecord first = runClosedLoop(run);
    double peak = 0.0;
    for (const StepRecord& s : first.steps) {
      for (const ThrustCommand& u : s.applied) peak = std::max(peak, u.maxAbs());
    }
    out.push_back({"box feasibility " + toString(c), peak <= cfg.uMax, "peak thrust " + num(peak) + " N"});
    const RunRecord second = runClosedLoop(run);
    out.push_back({"determinism " + toString(c), sameTrajectories(first, second),
                   std::to_string(first.steps.size()) + " steps compared"});
  }
  return out;
}

std::filesystem::path resolveOutputDir(const ScenarioConfig& cfg) {
  if (const char* env = std::getenv("RINGMPC_OUTPUT_DIR"); env && *env) return env;
  return cfg.outputDir;
}

}  // namespace ringmpc
