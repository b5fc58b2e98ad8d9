#include "ringmpc/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace ringmpc;

namespace {

const OrbitParams kOrbit = OrbitParams::fromAltitude(500e3);
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> evenRing(int n, double rotation = 0.0) {
  std::vector<double> t;
  for (int i = 0; i < n; ++i) t.push_back(wrapAngle(rotation + kTwoPi * i / n));
  return t;
}

RunRecord syntheticRun(int n, int steps) {
  RunRecord rec;
  rec.meta.controller = "DMPC-IS";
  rec.meta.nsat = n + 1;
  rec.meta.ndeorbit = 1;
  rec.meta.neighborCount = 2;
  rec.meta.horizon = 8;
  rec.meta.nloops = steps;
  rec.meta.sampleTime = 355.0;
  rec.meta.mass = 200.0;
  rec.meta.uMax = 0.2;
  rec.meta.chiefRadius = kOrbit.chiefRadius;
  rec.meta.meanMotion = kOrbit.meanMotion;
  rec.meta.seed = 3;
  for (int i = 0; i < n; ++i) rec.ids.push_back(i < 2 ? i : i + 1);
  rec.removed = {2};
  for (int k = 0; k < steps; ++k) {
    StepRecord s;
    const std::vector<double> theta = evenRing(n, 0.001 * k);
    for (int i = 0; i < n; ++i) {
      s.states.push_back({10.0 * i, theta[i] + 0.01 * (i == 1) * (steps - k), 0.0, 0.1, 1e-7, 0.0});
      s.applied.push_back({0.01 * i, -0.02, k == 0 ? 0.2 : 0.0});
      s.solveSeconds.push_back(1e-3);
      s.iterations.push_back(k + i);
    }
    rec.steps.push_back(s);
  }
  for (double t : evenRing(n, 0.001 * steps)) rec.finalStates.push_back({0.0, t, 0.0, 0.0, 0.0, 0.0});
  return rec;
}

}  // namespace

TEST_CASE("neighbor distance is wrapped arc length in km") {
  CHECK(neighborDistance(0.0, kTwoPi / 35.0, kOrbit) == doctest::Approx(1233.4).epsilon(1e-4));
  CHECK(neighborDistance(1.0, 1.0, kOrbit) == 0.0);
  CHECK(neighborDistance(3.13, -3.13, kOrbit) ==
        doctest::Approx(6871.0 * (kTwoPi - 6.26)).epsilon(1e-12));
}

TEST_CASE("position error of constructed rings") {
  const auto perfect = positionErrorFromAngles(evenRing(35), kOrbit.chiefRadius);
  CHECK(perfect.muSim < 1e-9);
  CHECK(perfect.target == doctest::Approx(1233.4).epsilon(1e-4));

  const int n = 10;
  const double delta = 0.002;
  std::vector<double> theta = evenRing(n);
  theta[4] += delta;
  const auto s = positionErrorFromAngles(theta, kOrbit.chiefRadius);
  const double deltaKm = delta * kOrbit.chiefRadius / 1000.0;
  CHECK(s.perSpacecraft[4] == doctest::Approx(s.target));
  CHECK(std::abs(s.perSpacecraft[3] - s.target) == doctest::Approx(deltaKm / 2.0));
  CHECK(std::abs(s.perSpacecraft[5] - s.target) == doctest::Approx(deltaKm / 2.0));
  CHECK(s.muSim == doctest::Approx(deltaKm / n));
  CHECK(s.maxErr == doctest::Approx(deltaKm / 2.0));
  CHECK(s.muSim <= s.maxErr);

  // invariant under a global rotation
  std::vector<double> rotated = theta;
  for (double& t : rotated) t = wrapAngle(t + 2.5);
  CHECK(positionErrorFromAngles(rotated, kOrbit.chiefRadius).muSim == doctest::Approx(s.muSim).epsilon(1e-9));
  CHECK_THROWS_AS(positionErrorFromAngles({0.0}, kOrbit.chiefRadius), std::invalid_argument);
}

TEST_CASE("total input is delivered delta-v") {
  RunRecord rec = syntheticRun(3, 1);
  for (auto& u : rec.steps[0].applied) u = {};
  CHECK(totalInput(rec, 200.0) == 0.0);
  rec.steps[0].applied[1] = {0.0, 0.2, 0.0};
  CHECK(totalInput(rec, 200.0) == doctest::Approx(0.355));
  // relabeling the spacecraft keeps the total
  RunRecord swapped = syntheticRun(5, 4);
  const double before = totalInput(swapped, 200.0);
  for (auto& s : swapped.steps) std::reverse(s.applied.begin(), s.applied.end());
  CHECK(totalInput(swapped, 200.0) == doctest::Approx(before));
}

TEST_CASE("mean and standard deviation conventions") {
  CHECK(meanStd({4.0}).std == 0.0);
  const MeanStd pop = meanStd({1.0, 3.0});
  CHECK(pop.mean == 2.0);
  CHECK(pop.std == doctest::Approx(1.0));
  CHECK(meanStd({1.0, 3.0}, StdConvention::Sample).std == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(meanStd({}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate(std::vector<RunSummary>{}), std::invalid_argument);
}

TEST_CASE("angular deviation and settling time") {
  const RunRecord rec = syntheticRun(6, 20);
  const Eigen::MatrixXd dev = angularDeviationSeries(rec);
  CHECK(dev.rows() == 20);
  CHECK(dev.cols() == 6);
  // last row is the final ring, perfectly even
  CHECK(dev.row(19).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(10, 2);
  d(3, 0) = 0.5;
  d.col(1).setConstant(0.5);
  const auto orbits = orbitsToConverge(d, 355.0, 3550.0);
  CHECK(orbits[0] == doctest::Approx(0.5));
  CHECK(std::isinf(orbits[1]));
  CHECK(orbitsToConverge(Eigen::MatrixXd::Zero(5, 1), 355.0, 3550.0)[0] == doctest::Approx(0.1));
}

TEST_CASE("smooth spacing gradient is not settled") {
  // locally almost even, globally 0.05 rad off its slot
  const int n = 30;
  RunRecord rec = syntheticRun(n, 10);
  const std::vector<double> even = evenRing(n, 0.0);
  for (auto& s : rec.steps) {
    for (int i = 0; i < n; ++i) s.states[i].theta = wrapAngle(even[i] + 0.05 * std::sin(2.0 * std::numbers::pi * i / n));
  }
  for (int i = 0; i < n; ++i) rec.finalStates[i].theta = even[i];
  const Eigen::MatrixXd dev = angularDeviationSeries(rec);
  CHECK(dev.row(0).cwiseAbs().maxCoeff() == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(dev.row(9).cwiseAbs().maxCoeff() < 1e-12);
  const auto orbits = orbitsToConverge(dev, 355.0, 3550.0);
  CHECK(*std::max_element(orbits.begin(), orbits.end()) == doctest::Approx(1.0));
}

TEST_CASE("summaries and batch statistics") {
  const RunRecord rec = syntheticRun(6, 12);
  const RunSummary s = summarize(rec, kOrbit, 4);
  CHECK(s.scenario == 4);
  CHECK(s.controller == "DMPC-IS");
  CHECK(s.solveSeconds == doctest::Approx(12 * 6 * 1e-3));
  CHECK(s.totalInput == doctest::Approx(totalInput(rec, 200.0)));
  CHECK(s.inputPerSpacecraft.size() == 6u);
  const BatchStats one = aggregate(std::vector<RunRecord>{rec}, kOrbit);
  CHECK(one.runs == 1);
  CHECK(one.positionError.std == 0.0);
  RunSummary a = s, b = s;
  a.muSim = 1.0;
  b.muSim = 3.0;
  const BatchStats two = aggregate({a, b});
  CHECK(two.positionError.mean == 2.0);
  CHECK(two.positionError.std == doctest::Approx(1.0));
  CHECK(two.positionError.std >= 0.0);
  CHECK(two.averageSolveSeconds == doctest::Approx(s.solveSeconds));
}

TEST_CASE("summary JSON round trip") {
  SummaryTable t;
  t.neighborCounts = {2, 4};
  t.controllers = {"CentMPC", "FD-MPC"};
  BatchStats b;
  b.runs = 10;
  b.positionError = {0.684, 0.028};
  b.maxError = {1.5, 0.0};
  b.totalInput = {1.953, 0.1};
  b.totalSolveSeconds = 3422.7;
  b.averageSolveSeconds = 342.27;
  t.cells["CentMPC"] = {b, b};
  b.positionError.mean = 67.96;
  t.cells["FD-MPC"] = {b, b};
  std::stringstream ss;
  writeSummaryJson(ss, t);
  CHECK(ss.str().find("position_error") != std::string::npos);
  CHECK(ss.str().find("solver_time") != std::string::npos);
  const SummaryTable back = readSummaryJson(ss);
  CHECK(back.neighborCounts == t.neighborCounts);
  CHECK(back.at("FD-MPC", 4).positionError.mean == 67.96);
  CHECK(back.at("CentMPC", 2).totalSolveSeconds == 3422.7);
  CHECK_THROWS_AS(back.at("CentMPC", 6), std::out_of_range);
}

TEST_CASE("run CSV round trip preserves the metrics") {
  const RunRecord rec = syntheticRun(5, 7);
  std::stringstream ss;
  writeRunCsv(ss, rec);
  const RunRecord back = readRunCsv(ss);
  CHECK(back.meta.controller == rec.meta.controller);
  CHECK(back.meta.seed == rec.meta.seed);
  CHECK(back.ids == rec.ids);
  CHECK(back.removed == rec.removed);
  REQUIRE(back.steps.size() == rec.steps.size());
  CHECK(back.steps[3].states[2].theta == rec.steps[3].states[2].theta);
  CHECK(back.steps[0].applied[4].crossTrack == rec.steps[0].applied[4].crossTrack);
  CHECK(back.finalStates[1].theta == rec.finalStates[1].theta);
  CHECK(positionErrorAtEnd(back, kOrbit).muSim == positionErrorAtEnd(rec, kOrbit).muSim);
  CHECK(totalInput(back, 200.0) == totalInput(rec, 200.0));
  std::stringstream bad("# controller\n");
  CHECK_THROWS(readRunCsv(bad));
}
