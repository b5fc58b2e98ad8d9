#include "oracles.hpp"

#include "ringmpc/controllers.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

using namespace ringmpc;

namespace {

const OrbitParams kOrbit = OrbitParams::fromAltitude(500e3);
constexpr double kMass = 200.0;
constexpr double kUMax = 0.2;

DiscreteModel model() { return discretize(buildContinuousModel(kOrbit), 355.0); }

struct Rollout {
  double transient{};
  double thetaEnd{};
};

// Direct simulation of the stage costs; rho weighted per km^2.
Rollout rollout(const DiscreteModel& m, const Weights& w, const CylindricalState& x0, const VectorXd& u,
                double mass) {
  const int np = static_cast<int>(u.size() / 3);
  Vector6 x = x0.vector();
  Rollout r;
  for (int k = 0; k < np; ++k) {
    const Eigen::Vector3d uk = u.segment<3>(3 * k);
    r.transient += w.alphaU * uk.squaredNorm();
    x = m.A * x + m.B * (uk / mass);
    const double rhoKm = x(0) / 1000.0;
    r.transient += (k + 1 == np ? w.alphaEnd : 1.0) * w.alphaRho * rhoKm * rhoKm;
  }
  r.thetaEnd = x(1);
  return r;
}

// Hessian and gradient at zero of a quadratic by exact finite differences.
void quadraticParts(const std::function<double(const VectorXd&)>& c, Eigen::Index d, MatrixXd& h, VectorXd& g) {
  h.resize(d, d);
  g.resize(d);
  const double c0 = c(VectorXd::Zero(d));
  VectorXd ci(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const VectorXd e = VectorXd::Unit(d, i);
    ci(i) = c(e);
    g(i) = 0.5 * (c(e) - c(-e));
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      const double v = c(VectorXd::Unit(d, i) + VectorXd::Unit(d, j)) - ci(i) - ci(j) + c0;
      h(i, j) = v;
      h(j, i) = h(i, j);
    }
  }
}

double normalizedKkt(const MatrixXd& h, const VectorXd& g, const VectorXd& u, double uMax) {
  const double s = uMax * uMax * h.diagonal().maxCoeff();
  const MatrixXd hn = uMax * uMax * h / s;
  const VectorXd gn = uMax * g / s;
  const VectorXd v = u / uMax;
  return oracle::projectedGradient(hn, gn, VectorXd::Constant(u.size(), -1.0), VectorXd::Constant(u.size(), 1.0), v);
}

}  // namespace

TEST_CASE("controller names") {
  CHECK((toString(ControllerKind::Centralized) == "CentMPC"));
  CHECK((toString(ControllerKind::FullyDecentralized) == "FD-MPC"));
  CHECK((toString(ControllerKind::InformationSharing) == "DMPC-IS"));
  CHECK((parseControllerKind("dmpc-is") == ControllerKind::InformationSharing));
  CHECK((parseControllerKind("fd") == ControllerKind::FullyDecentralized));
  CHECK((parseControllerKind("CENT") == ControllerKind::Centralized));
  CHECK_THROWS_AS(parseControllerKind("pid"), std::invalid_argument);
}

TEST_CASE("weights") {
  Weights w;
  CHECK(w.alphaRho == 1e-5);
  CHECK(w.alphaTheta == 1.0);
  CHECK(w.alphaU == 2.5e-3);
  CHECK(w.alphaEnd == 1e5);
  CHECK(w.rhoWeight() == doctest::Approx(1e-11));
  CHECK_NOTHROW(w.validate());
  w.alphaU = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.alphaEnd = 0.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("setpoint is the wrapped mean of neighbor angles") {
  NeighborInfo info;
  info.tracks = {{1, {0.3}}, {2, {-0.1}}};
  CHECK(setpointOffset(0.0, info, 5) == doctest::Approx(0.1));
  // across the branch cut
  info.tracks = {{1, {-3.13}}, {2, {3.10}}};
  CHECK(setpointOffset(3.13, info, 0) == doctest::Approx(0.5 * (wrapAngle(-3.13 - 3.13) + (3.10 - 3.13))));
  CHECK(std::abs(angularSetpoint(3.13, info, 0) - 3.13) < 0.1);
  // full tracks are indexed by step
  info.tracks = {{1, {0.0, 0.2, 0.4}}, {2, {0.0, -0.2, 0.0}}};
  CHECK(setpointOffset(0.0, info, 2) == doctest::Approx(0.2));
  CHECK_THROWS_AS(setpointOffset(0.0, info, 3), std::out_of_range);
  CHECK_THROWS_AS(setpointOffset(0.0, NeighborInfo{}, 0), std::invalid_argument);
}

TEST_CASE("condensed local cost matches a direct rollout") {
  const DiscreteModel m = model();
  const Weights w;
  const int np = 8;
  const CylindricalState x0{2500.0, 0.4, 100.0, 0.2, 3e-6, 0.0};
  const double setpoint = 0.45;
  const QpProblem p = buildLocalCost(x0, setpoint, w, buildPrediction(m, np), kMass, np, kUMax);
  CHECK(p.dim() == 3 * np);
  CHECK(p.lower.isApprox(VectorXd::Constant(3 * np, -kUMax)));

  auto cost = [&](const VectorXd& u) {
    const Rollout r = rollout(m, w, x0, u, kMass);
    const double e = r.thetaEnd - setpoint;
    return r.transient + w.alphaEnd * w.alphaTheta * e * e;
  };
  MatrixXd h;
  VectorXd g;
  quadraticParts(cost, 3 * np, h, g);
  CHECK((p.H - h).norm() <= 1e-7 * h.norm());
  CHECK((p.f - g).norm() <= 1e-7 * g.norm());

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(-kUMax, kUMax);
  const VectorXd u = VectorXd::NullaryExpr(3 * np, [&] { return uni(rng); });
  std::vector<ThrustCommand> inputs;
  for (int k = 0; k < np; ++k) inputs.push_back(ThrustCommand::fromVector(u.segment<3>(3 * k)));
  CHECK(evaluateLocalCost(m, w, x0, setpoint, inputs, kMass) == doctest::Approx(cost(u)).epsilon(1e-10));
  // the QP objective differs from the full cost by a constant
  CHECK(p.objective(u) - p.objective(VectorXd::Zero(3 * np)) ==
        doctest::Approx(cost(u) - cost(VectorXd::Zero(3 * np))).epsilon(1e-8));
}

TEST_CASE("local MPC returns a stationary, feasible plan") {
  const DiscreteModel m = model();
  const Weights w;
  const int np = 8;
  QpSettings settings;
  settings.tolerance = 1e-11;
  const LocalMpc mpc(m, w, np, kMass, kUMax, settings);
  for (double offset : {0.0, 1e-4, 0.02, -0.1}) {
    const CylindricalState x0{800.0, 1.0, 0.0, -0.1, 1e-6, 0.0};
    const ControlPlan plan = mpc.solveForOffset(x0, offset);
    REQUIRE(plan.horizon() == np);
    CHECK(plan.maxAbsInput() <= kUMax * (1.0 + 1e-12));
    CHECK(plan.theta.size() == static_cast<std::size_t>(np + 1));
    CHECK(plan.theta.front() == x0.theta);
    auto cost = [&](const VectorXd& u) {
      const Rollout r = rollout(m, w, x0, u, kMass);
      const double e = r.thetaEnd - (x0.theta + offset);
      return r.transient + w.alphaEnd * w.alphaTheta * e * e;
    };
    MatrixXd h;
    VectorXd g;
    quadraticParts(cost, 3 * np, h, g);
    CHECK(normalizedKkt(h, g, plan.qp.uStar, kUMax) < 1e-9);
    // the prediction is the rollout of the plan
    const Rollout r = rollout(m, w, x0, plan.qp.uStar, kMass);
    CHECK(plan.theta.back() == doctest::Approx(r.thetaEnd).epsilon(1e-12));
    const auto shared = plan.sharedTrajectory(355.0);
    CHECK(shared.size() == static_cast<std::size_t>(np + 1));
    CHECK(shared[np] == doctest::Approx(plan.theta[np] + plan.predicted.back().thetaDot * 355.0));
    // dual warm start lands on the same plan
    const ControlPlan again = mpc.solveForOffset(x0, offset, plan.qp.dual);
    CHECK((again.qp.uStar - plan.qp.uStar).norm() < 1e-6 * kUMax);
  }
}

TEST_CASE("local MPC at equilibrium does nothing") {
  const LocalMpc mpc(model(), Weights{}, 16, kMass, kUMax);
  const ControlPlan plan = mpc.solveForOffset(CylindricalState{0.0, 0.7, 0.0, 0.0, 0.0, 0.0}, 0.0);
  CHECK(plan.maxAbsInput() < 1e-9);
}

TEST_CASE("FD and DMPC-IS entry points check their information") {
  const DiscreteModel m = model();
  const int np = 6;
  const LocalMpc mpc(m, Weights{}, np, kMass, kUMax);
  const CylindricalState x0{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  NeighborInfo sensed;
  sensed.tracks = {{1, {0.01}}, {2, {-0.03}}};
  const ControlPlan fd = mpc.solveFd(x0, sensed);
  const ControlPlan direct = mpc.solveForOffset(x0, -0.01);
  CHECK((fd.qp.uStar - direct.qp.uStar).norm() < 1e-9);
  CHECK_THROWS_AS(mpc.solveDmpcIs(x0, sensed), std::invalid_argument);

  NeighborInfo shared;
  shared.tracks = {{1, std::vector<double>(np + 1, 0.02)}, {2, std::vector<double>(np + 1, 0.0)}};
  shared.tracks[1].theta.back() = 0.04;
  const ControlPlan is = mpc.solveDmpcIs(x0, shared);
  const ControlPlan isDirect = mpc.solveForOffset(x0, 0.03);
  CHECK((is.qp.uStar - isDirect.qp.uStar).norm() < 1e-9);
  CHECK_THROWS_AS(mpc.solveFd(x0, shared), std::invalid_argument);

  const ControlPlan free = solveFdMpc(x0, {0.01, -0.03}, Weights{}, m, np, kMass, kUMax);
  CHECK((free.qp.uStar - fd.qp.uStar).norm() < 1e-9);
}

TEST_CASE("centralized MPC is stationary for the joint cost") {
  const DiscreteModel m = model();
  const Weights w;
  const int np = 6;
  const int n = 5;
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i) nbrs[i] = {(i + n - 1) % n, (i + 1) % n};
  std::vector<CylindricalState> states(n);
  const double spacing = 2.0 * std::numbers::pi / n;
  for (int i = 0; i < n; ++i) states[i].theta = wrapAngle(i * spacing + 0.01 * (i % 3 == 0 ? 1 : -1) * i);
  states[2].rho = 500.0;

  QpSettings settings;
  settings.tolerance = 1e-11;
  const std::vector<double> masses(n, kMass);
  const CentralizedMpc cent(m, w, np, masses, kUMax, nbrs, settings);
  const CentralizedResult res = cent.solve(states);
  REQUIRE(res.plans.size() == static_cast<std::size_t>(n));

  auto joint = [&](const VectorXd& u) {
    std::vector<Rollout> r(n);
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      r[i] = rollout(m, w, states[i], u.segment(3 * np * i, 3 * np), kMass);
      cost += r[i].transient;
    }
    for (int i = 0; i < n; ++i) {
      const double advI = r[i].thetaEnd - states[i].theta;
      double mean = 0.0;
      for (int j : nbrs[i]) mean += wrapAngle(states[j].theta - states[i].theta) + (r[j].thetaEnd - states[j].theta);
      const double e = advI - mean / static_cast<double>(nbrs[i].size());
      cost += w.alphaEnd * w.alphaTheta * e * e;
    }
    return cost;
  };
  MatrixXd h;
  VectorXd g;
  quadraticParts(joint, 3 * np * n, h, g);
  VectorXd u(3 * np * n);
  std::vector<std::vector<ThrustCommand>> inputs;
  for (int i = 0; i < n; ++i) {
    const ControlPlan& p = res.plans[i];
    CHECK(p.maxAbsInput() <= kUMax * (1.0 + 1e-12));
    for (int k = 0; k < np; ++k) u.segment<3>(3 * np * i + 3 * k) = p.inputs[k].vector();
    inputs.push_back(p.inputs);
  }
  CHECK(normalizedKkt(h, g, u, kUMax) < 1e-9);
  CHECK(cent.jointCost(states, inputs) == doctest::Approx(joint(u)).epsilon(1e-10));

  // warm restart from the returned multipliers
  const CentralizedResult again = cent.solve(states, res.qp.dual);
  for (int i = 0; i < n; ++i) {
    CHECK((again.plans[i].qp.uStar - res.plans[i].qp.uStar).norm() < 1e-6 * kUMax);
  }
  CHECK_THROWS_AS(cent.solve(std::vector<CylindricalState>(n - 1)), std::invalid_argument);
  CHECK_THROWS_AS(CentralizedMpc(m, w, np, masses, kUMax, {{1}, {0}}), std::invalid_argument);
}

TEST_CASE("centralized MPC at an equidistant ring does nothing") {
  const int n = 6;
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i) nbrs[i] = {(i + n - 1) % n, (i + 1) % n};
  std::vector<CylindricalState> states(n);
  for (int i = 0; i < n; ++i) states[i].theta = wrapAngle(2.0 * std::numbers::pi * i / n);
  const auto plans = solveCentralized(states, nbrs, Weights{}, model(), 8, std::vector<double>(n, kMass), kUMax);
  for (const ControlPlan& p : plans) CHECK(p.maxAbsInput() < 1e-9);
}
