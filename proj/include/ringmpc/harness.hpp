#pragma once

#include "ringmpc/constellation.hpp"
#include "ringmpc/controllers.hpp"
#include "ringmpc/metrics.hpp"
#include "ringmpc/qp.hpp"
#include "ringmpc/truth.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringmpc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed-loop failure with the step at which it happened.
class SimulationError : public std::runtime_error {
 public:
  enum class Kind { Solver, Integration };

  SimulationError(Kind kind, int step, const std::string& what)
      : std::runtime_error(what), kind_(kind), step_(step) {}
  Kind kind() const { return kind_; }
  int step() const { return step_; }

 private:
  Kind kind_;
  int step_;
};

/// Scenario parameters. Defaults reproduce the reference setup: 40 spacecraft
/// at 500 km, 5 deorbited, Ts = 355 s, Np = 64, 400 steps.
struct ScenarioConfig {
  int nsat{40};
  int ndeorbit{5};
  int neighborCount{2};
  ControllerKind controller{ControllerKind::InformationSharing};
  int horizon{64};
  double sampleTime{355.0};  // s
  int nloops{400};
  Weights weights;
  double uMax{0.2};          // N
  double mass{200.0};        // kg
  double altitude{500e3};    // m above the mean Earth radius
  IntegratorConfig integrator;
  QpSettings qp{1e-11};  // stationarity on the normalized problem (u / uMax, scaled objective)
  std::uint64_t seed{1};
  double messageLoss{0.0};   // probability that one trajectory message is dropped
  std::string outputDir{"."};

  /// Throws ConfigError.
  void validate() const;
  OrbitParams orbit() const;

  /// Nsat = 12, Ndeorbit = 2, Nloops = 96, Np = 32.
  static ScenarioConfig deskPreset();
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ScenarioConfig fromJson(const std::string& text, const ScenarioConfig& base);
  static ScenarioConfig fromJson(const std::string& text);
  static ScenarioConfig load(const std::filesystem::path& path, const ScenarioConfig& base);
  static ScenarioConfig load(const std::filesystem::path& path);
  std::string toJson() const;
};

/// Called after every closed-loop step with the step index.
using StepObserver = std::function<void(int)>;

/// Receding-horizon loop: measure, gather neighbor information, solve, apply
/// u(0) to the two-body truth model for one sample, repeat nloops times.
RunRecord runClosedLoop(const ScenarioConfig& cfg, const StepObserver& observer = {});

/// Grid of sub-simulations. Scenario s uses seed base.seed + s in every
/// (controller, |N|) cell so the deorbit sets are paired.
struct SweepSpec {
  std::vector<int> neighborCounts{2, 4, 6, 8, 10};
  std::vector<ControllerKind> controllers{ControllerKind::Centralized,
                                          ControllerKind::FullyDecentralized,
                                          ControllerKind::InformationSharing};
  int scenarios{10};

  void validate() const;
  std::uint64_t seedFor(const ScenarioConfig& base, int scenario) const {
    return base.seed + static_cast<std::uint64_t>(scenario);
  }
};

struct SweepResult {
  SummaryTable table;
  std::vector<RunSummary> runs;
};

/// Called once per finished run, for logging or persisting records.
using RunSink = std::function<void(const RunRecord&, const RunSummary&)>;

SweepResult runSweep(const SweepSpec& spec, const ScenarioConfig& base, const RunSink& sink = {});

enum class PlotKind { AngularDeviation, PerSatInput, ErrorVsNeighbors };

/// "angular-deviation", "per-sat-input", "error-vs-neighbors"; throws invalid_argument.
PlotKind parsePlotKind(const std::string& name);
std::string toString(PlotKind kind);

/// Columns step, orbit, id, deviation_rad; Nloops x survivors rows.
void writeAngularDeviation(std::ostream& os, const RunRecord& rec, const OrbitParams& params);
/// One row per original slot; deorbited slots are flagged and carry zero input.
void writePerSatInput(std::ostream& os, const RunSummary& run, int slotCount);
/// One row per controller and |N| with mean and std of the position error.
void writeErrorVsNeighbors(std::ostream& os, const SummaryTable& table);

/// Writes the file for `kind` into dir and returns its path. Run-based kinds
/// need rec; ErrorVsNeighbors needs table.
std::filesystem::path emitPlotData(PlotKind kind, const std::filesystem::path& dir,
                                   const RunRecord* rec, const SummaryTable* table,
                                   const OrbitParams& params);

struct InvariantResult {
  std::string name;
  bool passed{};
  std::string detail;
};

/// Rotational invariance, box feasibility, neighbor symmetry and determinism
/// checked on the given scenario for every controller.
std::vector<InvariantResult> validateInvariants(const ScenarioConfig& cfg);

/// Records equal in everything except solve timings.
bool sameTrajectories(const RunRecord& a, const RunRecord& b);

/// Output directory: RINGMPC_OUTPUT_DIR if set, else the configured one.
std::filesystem::path resolveOutputDir(const ScenarioConfig& cfg);

}  // namespace ringmpc
