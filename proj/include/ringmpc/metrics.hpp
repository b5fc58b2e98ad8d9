#pragma once

#include "ringmpc/dynamics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ringmpc {

struct RunMetadata {
  std::string controller;
  int nsat{};
  int ndeorbit{};
  int neighborCount{};
  int horizon{};
  int nloops{};
  double sampleTime{};  // s
  double mass{};        // kg
  double uMax{};        // N
  double chiefRadius{}; // m
  double meanMotion{};  // rad/s
  std::uint64_t seed{};
};

struct StepRecord {
  std::vector<CylindricalState> states;   // measured at the start of the step
  std::vector<ThrustCommand> applied;
  std::vector<double> solveSeconds;       // a joint solve is split evenly over spacecraft
  std::vector<int> iterations;
};

/// Everything logged by one closed-loop run. Spacecraft columns follow ring
/// order of the survivors.
struct RunRecord {
  RunMetadata meta;
  std::vector<int> ids;       // survivor slot ids in ring order
  std::vector<int> removed;   // deorbited slot ids
  std::vector<StepRecord> steps;
  std::vector<CylindricalState> finalStates;  // after the last applied input
  int lostMessages{};
  int degradedTracks{};

  int spacecraftCount() const { return static_cast<int>(ids.size()); }
  double totalSolveSeconds() const;
};

struct PositionErrorStats {
  std::vector<double> perSpacecraft;  // D_i, km
  double target{};                    // 2 pi R / N, km
  double muSim{};                     // km
  double maxErr{};                    // km
};

/// Arc length R |wrap(thetaJ - thetaI)| in km.
double neighborDistance(double thetaI, double thetaJ, const OrbitParams& params);

/// D_i is the mean distance to the two ring-adjacent survivors.
PositionErrorStats positionErrorFromAngles(const std::vector<double>& theta, double chiefRadius);
PositionErrorStats positionErrorAtEnd(const RunRecord& rec, const OrbitParams& params);

/// Total delivered delta-v, sum of |u| Ts / m over steps, spacecraft and axes (m/s).
double totalInput(const RunRecord& rec, double mass);
std::vector<double> inputPerSpacecraft(const RunRecord& rec, double mass);

/// Row k (k = 0..Nloops-1) is the state after k+1 applied inputs; column i is
/// wrap(theta_i - slot_i), the slots being the equidistant ring that best
/// fits the final configuration (spacing 2pi/N, rotation by circular mean).
Eigen::MatrixXd angularDeviationSeries(const RunRecord& rec);

/// Orbits elapsed until |deviation| stays at or below the threshold for the
/// rest of the run, per spacecraft; infinity if it never settles.
std::vector<double> orbitsToConverge(const Eigen::MatrixXd& deviation, double sampleTime,
                                     double period, double threshold = 0.01);

struct MeanStd {
  double mean{};
  double std{};
};

enum class StdConvention { Population, Sample };

MeanStd meanStd(const std::vector<double>& values, StdConvention c = StdConvention::Population);

/// Indices of one run, kept instead of the full record in large batches.
struct RunSummary {
  std::string controller;
  int neighborCount{};
  int scenario{};
  std::uint64_t seed{};
  double muSim{};
  double maxErr{};
  double totalInput{};
  double solveSeconds{};
  double orbitsToConverge{std::numeric_limits<double>::infinity()};  // worst spacecraft
  int unconvergedSpacecraft{};
  std::vector<int> ids;
  std::vector<int> removed;
  std::vector<double> inputPerSpacecraft;
};

RunSummary summarize(const RunRecord& rec, const OrbitParams& params, int scenario = 0,
                     double convergenceThreshold = 0.01);

struct BatchStats {
  int runs{};
  MeanStd positionError;   // of muSim, km
  MeanStd maxError;        // km
  MeanStd totalInput;      // m/s
  double totalSolveSeconds{};
  double averageSolveSeconds{};  // per run
};

BatchStats aggregate(const std::vector<RunSummary>& batch, StdConvention c = StdConvention::Population);
BatchStats aggregate(const std::vector<RunRecord>& batch, const OrbitParams& params,
                     StdConvention c = StdConvention::Population);

/// Batch statistics laid out as controller x neighbor count.
struct SummaryTable {
  std::vector<int> neighborCounts;
  std::vector<std::string> controllers;
  std::map<std::string, std::vector<BatchStats>> cells;  // cells[controller][index of |N|]

  const BatchStats& at(const std::string& controller, int neighborCount) const;
};

/// JSON with "position_error", "total_input" and "solver_time" sections, each
/// keyed by controller then |N|.
void writeSummaryJson(std::ostream& os, const SummaryTable& table);
SummaryTable readSummaryJson(std::istream& is);

/// One row per step per spacecraft, preceded by "# key=value" metadata lines.
/// The final states are written as step Nloops with zero thrust.
void writeRunCsv(std::ostream& os, const RunRecord& rec);
RunRecord readRunCsv(std::istream& is);

}  // namespace ringmpc
