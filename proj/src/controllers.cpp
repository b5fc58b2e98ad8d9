#include "ringmpc/controllers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ringmpc {

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

LocalCostTerms termsFromPrediction(const PredictionOperator& pred, const Weights& w, double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("spacecraft mass must be positive");
  const int np = pred.horizon;
  const Eigen::Index nu = 3 * np;
  LocalCostTerms t;
  t.horizon = np;
  t.mass = mass;
  t.prediction = pred;
  t.terminalThetaWeight = w.alphaEnd * w.alphaTheta;

  // rows of the prediction that carry rho(k), weighted as in the cost
  MatrixXd rhoRows(np, nu);
  MatrixXd rhoFree(np, 6);
  VectorXd q(np);
  for (int k = 1; k <= np; ++k) {
    rhoRows.row(k - 1) = pred.Gamma.row(pred.stateRow(k, 0)) / mass;
    rhoFree.row(k - 1) = pred.Phi.row(pred.stateRow(k, 0));
    q(k - 1) = k < np ? w.rhoWeight() : w.alphaEnd * w.rhoWeight();
  }
  rhoFree.col(1).setZero();

  const MatrixXd weighted = q.asDiagonal() * rhoRows;
  t.hessianBase = 2.0 * rhoRows.transpose() * weighted;
  t.hessianBase.diagonal().array() += 2.0 * w.alphaU;
  t.hessianBase = 0.5 * (t.hessianBase + t.hessianBase.transpose()).eval();
  t.rhoGain = 2.0 * weighted.transpose() * rhoFree;
  t.rhoRows = rhoRows;
  t.rhoWeight = q;

  const int thetaRow = pred.stateRow(np, 1);
  t.thetaDrift = pred.Phi.row(thetaRow).transpose();
  t.thetaDrift(1) = 0.0;
  t.thetaGain = pred.Gamma.row(thetaRow).transpose() / mass;
  return t;
}

MatrixXd localHessian(const LocalCostTerms& t) {
  MatrixXd h = t.hessianBase;
  h.noalias() += 2.0 * t.terminalThetaWeight * t.thetaGain * t.thetaGain.transpose();
  return h;
}

VectorXd localLinear(const LocalCostTerms& t, const CylindricalState& x0, double offset) {
  const Vector6 x = x0.vector();
  const double terminal = t.thetaDrift.dot(x) - offset;
  return t.rhoGain * x + 2.0 * t.terminalThetaWeight * terminal * t.thetaGain;
}

// Normalized block over v = u / uMax with the objective divided by scale:
// diagonal 2 alphaU uMax^2 / scale, rows sqrt(2 q_k) uMax / sqrt(scale) rho_k.
LowRankBlock normalizedBlock(const LocalCostTerms& t, const Weights& w, double uMax, double scale,
                             bool terminalRow) {
  const double c = uMax / std::sqrt(scale);
  LowRankBlock b;
  b.diagonal = VectorXd::Constant(3 * t.horizon, 2.0 * w.alphaU * uMax * uMax / scale);
  b.rows.resize(t.horizon + (terminalRow ? 1 : 0), 3 * t.horizon);
  b.rows.topRows(t.horizon) = c * (2.0 * t.rhoWeight).cwiseSqrt().asDiagonal() * t.rhoRows;
  if (terminalRow) b.rows.row(t.horizon) = c * std::sqrt(2.0 * t.terminalThetaWeight) * t.thetaGain.transpose();
  return b;
}

std::vector<ThrustCommand> unstack(const VectorXd& u) {
  std::vector<ThrustCommand> out(static_cast<std::size_t>(u.size() / 3));
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    out[k] = {u(i), u(i + 1), u(i + 2)};
  }
  return out;
}

// rho and input parts of the cost; returns theta(Np) through thetaEnd
double transientCost(const DiscreteModel& model, const Weights& w, const CylindricalState& x0,
                     const std::vector<ThrustCommand>& inputs, double mass, double& thetaEnd) {
  CylindricalState x = x0;
  double cost = 0.0;
  const std::size_t np = inputs.size();
  for (std::size_t k = 0; k < np; ++k) {
    cost += w.alphaU * inputs[k].vector().squaredNorm();
    x = propagateLinear(model, x, inputs[k], mass);
    cost += (k + 1 < np ? w.rhoWeight() : w.alphaEnd * w.rhoWeight()) * x.rho * x.rho;
  }
  thetaEnd = x.theta;
  return cost;
}

void requireConverged(const QpSolution& sol, const char* who) {
  if (!sol.converged()) {
    throw SolverError(std::string(who) + " QP did not converge (" + toString(sol.status) +
                             ", kkt " + std::to_string(sol.kktResidual) + ")");
  }
}

}  // namespace

std::string toString(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Centralized: return "CentMPC";
    case ControllerKind::FullyDecentralized: return "FD-MPC";
    case ControllerKind::InformationSharing: return "DMPC-IS";
  }
  return "unknown";
}

ControllerKind parseControllerKind(const std::string& name) {
  const std::string s = lower(name);
  if (s == "centmpc" || s == "cent" || s == "centralized") return ControllerKind::Centralized;
  if (s == "fd-mpc" || s == "fd" || s == "fdmpc") return ControllerKind::FullyDecentralized;
  if (s == "dmpc-is" || s == "is" || s == "dmpcis") return ControllerKind::InformationSharing;
  throw std::invalid_argument("unknown controller '" + name + "'");
}

void Weights::validate() const {
  for (double a : {alphaRho, alphaTheta, alphaU, alphaEnd}) {
    if (!std::isfinite(a) || a < 0.0) throw std::invalid_argument("weights must be finite and non-negative");
  }
  if (!(alphaU > 0.0)) throw std::invalid_argument("alphaU must be positive");
  if (alphaEnd < 1.0) throw std::invalid_argument("alphaEnd must be at least 1");
  if (!std::isfinite(rhoUnit) || !(rhoUnit > 0.0)) throw std::invalid_argument("rhoUnit must be positive");
}

int NeighborInfo::degradedCount() const {
  return static_cast<int>(std::count_if(tracks.begin(), tracks.end(),
                                        [](const NeighborTrack& t) { return t.degraded; }));
}

double setpointOffset(double thetaSelf, const NeighborInfo& neighbors, int k) {
  if (neighbors.tracks.empty()) throw std::invalid_argument("setpoint needs at least one neighbor");
  double sum = 0.0;
  for (const NeighborTrack& t : neighbors.tracks) {
    if (t.theta.empty()) throw std::invalid_argument("neighbor track is empty");
    const std::size_t idx = t.theta.size() == 1 ? 0 : static_cast<std::size_t>(k);
    if (idx >= t.theta.size()) throw std::out_of_range("neighbor track shorter than requested step");
    sum += wrapAngle(t.theta[idx] - thetaSelf);
  }
  return sum / static_cast<double>(neighbors.tracks.size());
}

double angularSetpoint(double thetaSelf, const NeighborInfo& neighbors, int k) {
  return thetaSelf + setpointOffset(thetaSelf, neighbors, k);
}

double ControlPlan::maxAbsInput() const {
  double m = 0.0;
  for (const ThrustCommand& u : inputs) m = std::max(m, u.maxAbs());
  return m;
}

std::vector<double> ControlPlan::sharedTrajectory(double sampleTime) const {
  if (theta.size() < 2 || predicted.empty()) throw std::logic_error("plan has no prediction");
  std::vector<double> out(theta.begin() + 1, theta.end());
  out.push_back(theta.back() + predicted.back().thetaDot * sampleTime);
  return out;
}

LocalCostTerms buildLocalCostTerms(const DiscreteModel& model, const Weights& w, int horizon,
                                   double mass) {
  w.validate();
  return termsFromPrediction(buildPrediction(model, horizon), w, mass);
}

QpProblem buildLocalCost(const CylindricalState& x0, double setpointTerminal, const Weights& w,
                         const PredictionOperator& pred, double mass, int horizon, double uMax) {
  w.validate();
  if (pred.horizon != horizon) throw std::invalid_argument("prediction horizon mismatch");
  if (!(uMax > 0.0)) throw std::invalid_argument("uMax must be positive");
  const LocalCostTerms t = termsFromPrediction(pred, w, mass);
  QpProblem p;
  p.H = localHessian(t);
  p.f = localLinear(t, x0, setpointTerminal - x0.theta);
  p.lower = VectorXd::Constant(3 * horizon, -uMax);
  p.upper = VectorXd::Constant(3 * horizon, uMax);
  return p;
}

double evaluateLocalCost(const DiscreteModel& model, const Weights& w, const CylindricalState& x0,
                         double setpointTerminal, const std::vector<ThrustCommand>& inputs,
                         double mass) {
  double thetaEnd = 0.0;
  const double transient = transientCost(model, w, x0, inputs, mass, thetaEnd);
  const double e = thetaEnd - setpointTerminal;
  return transient + w.alphaEnd * w.alphaTheta * e * e;
}

void fillPrediction(ControlPlan& plan, const DiscreteModel& model, const CylindricalState& x0,
                    double mass) {
  plan.predicted.clear();
  plan.theta.assign(1, x0.theta);
  CylindricalState x = x0;
  for (const ThrustCommand& u : plan.inputs) {
    x = propagateLinear(model, x, u, mass);
    plan.predicted.push_back(x);
    plan.theta.push_back(x.theta);
  }
}

LocalMpc::LocalMpc(const DiscreteModel& model, const Weights& w, int horizon, double mass,
                   double uMax, QpSettings settings)
    : model_(model), terms_(buildLocalCostTerms(model, w, horizon, mass)), uMax_(uMax), settings_(settings) {
  if (!(uMax > 0.0)) throw std::invalid_argument("uMax must be positive");
  objectiveScale_ = uMax * uMax * localHessian(terms_).diagonal().maxCoeff();
  qp_ = std::make_unique<BlockLowRankQp>(std::vector<std::shared_ptr<const LowRankBlock>>{
      std::make_shared<const LowRankBlock>(normalizedBlock(terms_, w, uMax, objectiveScale_, true))});
}

ControlPlan LocalMpc::solveForOffset(const CylindricalState& x0, double offset,
                                     const std::optional<VectorXd>& warm) const {
  if (!x0.isFinite() || !std::isfinite(offset)) throw std::invalid_argument("non-finite MPC input");
  const auto start = Clock::now();
  ControlPlan plan;
  const Eigen::Index d = 3 * horizon();
  const VectorXd f = (uMax_ / objectiveScale_) * localLinear(terms_, x0, offset);
  plan.qp = qp_->solve(f, VectorXd::Constant(d, -1.0), VectorXd::Constant(d, 1.0), warm, settings_);
  plan.solveSeconds = secondsSince(start);
  requireConverged(plan.qp, "local");
  plan.qp.uStar *= uMax_;
  plan.qp.objective *= objectiveScale_;
  plan.inputs = unstack(plan.qp.uStar);
  fillPrediction(plan, model_, x0, terms_.mass);
  return plan;
}

ControlPlan LocalMpc::solve(const CylindricalState& x0, double setpointTerminal,
                            const std::optional<VectorXd>& warm) const {
  return solveForOffset(x0, setpointTerminal - x0.theta, warm);
}

ControlPlan LocalMpc::solveFd(const CylindricalState& x0, const NeighborInfo& info,
                              const std::optional<VectorXd>& warm) const {
  for (const NeighborTrack& t : info.tracks) {
    if (t.theta.size() != 1) throw std::invalid_argument("FD-MPC neighbor info must be a single angle");
  }
  return solveForOffset(x0, setpointOffset(x0.theta, info, horizon()), warm);
}

ControlPlan LocalMpc::solveDmpcIs(const CylindricalState& x0, const NeighborInfo& info,
                                  const std::optional<VectorXd>& warm) const {
  const auto expected = static_cast<std::size_t>(horizon() + 1);
  for (const NeighborTrack& t : info.tracks) {
    if (t.theta.size() != expected) {
      throw std::invalid_argument("DMPC-IS neighbor trajectories must have length Np+1");
    }
  }
  return solveForOffset(x0, setpointOffset(x0.theta, info, horizon()), warm);
}

ControlPlan solveFdMpc(const CylindricalState& x0, const std::vector<double>& neighborAngles,
                       const Weights& w, const DiscreteModel& model, int horizon, double mass,
                       double uMax, const QpSettings& settings) {
  NeighborInfo info;
  int id = 0;
  for (double a : neighborAngles) info.tracks.push_back({id++, {a}, false});
  return LocalMpc(model, w, horizon, mass, uMax, settings).solveFd(x0, info);
}

ControlPlan solveDmpcIs(const CylindricalState& x0,
                        const std::vector<std::vector<double>>& neighborTrajectories,
                        const Weights& w, const DiscreteModel& model, int horizon, double mass,
                        double uMax, const QpSettings& settings) {
  NeighborInfo info;
  int id = 0;
  for (const auto& tr : neighborTrajectories) info.tracks.push_back({id++, tr, false});
  return LocalMpc(model, w, horizon, mass, uMax, settings).solveDmpcIs(x0, info);
}

CentralizedMpc::CentralizedMpc(const DiscreteModel& model, const Weights& w, int horizon,
                               std::vector<double> masses, double uMax,
                               std::vector<std::vector<int>> neighbors, QpSettings settings)
    : model_(model),
      weights_(w),
      horizon_(horizon),
      masses_(std::move(masses)),
      uMax_(uMax),
      neighbors_(std::move(neighbors)),
      settings_(settings) {
  w.validate();
  const auto n = static_cast<Eigen::Index>(masses_.size());
  if (n == 0) throw std::invalid_argument("centralized MPC needs at least one spacecraft");
  if (static_cast<Eigen::Index>(neighbors_.size()) != n) {
    throw std::invalid_argument("one neighbor list per spacecraft is required");
  }
  if (!(uMax > 0.0)) throw std::invalid_argument("uMax must be positive");

  const PredictionOperator pred = buildPrediction(model, horizon);
  std::map<double, std::shared_ptr<const LocalCostTerms>> byMass;
  std::map<double, std::shared_ptr<const LocalMpc>> seedByMass;
  for (double m : masses_) {
    auto& slot = byMass[m];
    if (!slot) slot = std::make_shared<const LocalCostTerms>(termsFromPrediction(pred, w, m));
    terms_.push_back(slot);
    auto& seed = seedByMass[m];
    if (!seed) seed = std::make_shared<const LocalMpc>(model, w, horizon, m, uMax, settings);
    seeds_.push_back(seed);
  }

  MatrixXd l = MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ni = neighbors_[i];
    if (ni.empty()) throw std::invalid_argument("every spacecraft needs at least one neighbor");
    for (int j : ni) {
      if (j < 0 || j >= n || j == i) throw std::invalid_argument("invalid neighbor index");
      l(i, j) -= 1.0 / static_cast<double>(ni.size());
    }
  }
  laplacian_ = l;
  const VectorXd gram = (l.transpose() * l).diagonal();

  const double u2 = uMax * uMax;
  const double wt = w.alphaEnd * w.alphaTheta;
  objectiveScale_ = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = *terms_[i];
    const VectorXd diag =
        u2 * (t.hessianBase.diagonal() + 2.0 * wt * gram(i) * t.thetaGain.array().square().matrix());
    objectiveScale_ = std::max(objectiveScale_, diag.maxCoeff());
  }

  std::map<const LocalCostTerms*, std::shared_ptr<const LowRankBlock>> blockCache;
  std::vector<std::shared_ptr<const LowRankBlock>> blocks;
  std::vector<VectorXd> vectors;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& b = blockCache[terms_[i].get()];
    if (!b) b = std::make_shared<const LowRankBlock>(normalizedBlock(*terms_[i], w, uMax, objectiveScale_, false));
    blocks.push_back(b);
    vectors.push_back(uMax * terms_[i]->thetaGain);
  }
  qp_ = std::make_unique<BlockLowRankQp>(std::move(blocks), std::move(vectors),
                                         std::sqrt(2.0 * wt / objectiveScale_) * laplacian_);
}

CentralizedResult CentralizedMpc::solve(const std::vector<CylindricalState>& states,
                                        const std::optional<VectorXd>& warm) const {
  const auto n = static_cast<Eigen::Index>(masses_.size());
  if (static_cast<Eigen::Index>(states.size()) != n) {
    throw std::invalid_argument("state count does not match the centralized problem");
  }
  const auto start = Clock::now();
  const Eigen::Index block = 3 * horizon_;
  const double wt = weights_.alphaEnd * weights_.alphaTheta;

  // terminal consensus residual at U = 0: c_i = phi_i - mean_j (wrap(theta_j - theta_i) + phi_j)
  VectorXd drift(n);
  for (Eigen::Index i = 0; i < n; ++i) drift(i) = terms_[i]->thetaDrift.dot(states[i].vector());
  VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j : neighbors_[i]) mean += wrapAngle(states[j].theta - states[i].theta) + drift(j);
    c(i) = drift(i) - mean / static_cast<double>(neighbors_[i].size());
  }
  const VectorXd ltc = laplacian_.transpose() * c;

  VectorXd f(n * block);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = *terms_[i];
    f.segment(i * block, block) =
        (uMax_ / objectiveScale_) *
        (t.rhoGain * states[i].vector() + 2.0 * wt * ltc(i) * t.thetaGain);
  }
  const VectorXd lo = VectorXd::Constant(n * block, -1.0);
  const VectorXd hi = VectorXd::Constant(n * block, 1.0);
  std::optional<VectorXd> dualStart = warm;
  if (!dualStart || dualStart->size() != qp_->dualDim()) {
    // each spacecraft steers towards the mean of its neighbors' drifting terminal angles
    VectorXd guess(n * block);
    for (Eigen::Index i = 0; i < n; ++i) {
      double target = 0.0;
      for (int j : neighbors_[i]) target += wrapAngle(states[j].theta - states[i].theta) + drift(j);
      target /= static_cast<double>(neighbors_[i].size());
      guess.segment(i * block, block) = seeds_[i]->solveForOffset(states[i], target).qp.uStar / uMax_;
    }
    dualStart = qp_->applyRows(guess);
  }
  CentralizedResult out;
  out.qp = qp_->solve(f, lo, hi, dualStart, settings_);
  out.solveSeconds = secondsSince(start);
  requireConverged(out.qp, "centralized");
  out.objective = objectiveScale_ * out.qp.objective;

  out.plans.resize(states.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    ControlPlan& p = out.plans[i];
    p.inputs = unstack(uMax_ * out.qp.uStar.segment(i * block, block));
    fillPrediction(p, model_, states[i], masses_[i]);
    p.qp.uStar = uMax_ * out.qp.uStar.segment(i * block, block);
    p.qp.status = out.qp.status;
    p.qp.kktResidual = out.qp.kktResidual;
    p.qp.iterations = out.qp.iterations;
    p.qp.factorizations = out.qp.factorizations;
  }
  return out;
}

double CentralizedMpc::jointCost(const std::vector<CylindricalState>& states,
                                 const std::vector<std::vector<ThrustCommand>>& inputs) const {
  const std::size_t n = masses_.size();
  if (states.size() != n || inputs.size() != n) throw std::invalid_argument("joint cost size mismatch");
  std::vector<double> advance(n);
  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double thetaEnd = 0.0;
    cost += transientCost(model_, weights_, states[i], inputs[i], masses_[i], thetaEnd);
    advance[i] = thetaEnd - states[i].theta;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j : neighbors_[i]) mean += wrapAngle(states[j].theta - states[i].theta) + advance[j];
    const double e = advance[i] - mean / static_cast<double>(neighbors_[i].size());
    cost += weights_.alphaEnd * weights_.alphaTheta * e * e;
  }
  return cost;
}

std::vector<ControlPlan> solveCentralized(const std::vector<CylindricalState>& states,
                                          const std::vector<std::vector<int>>& neighbors,
                                          const Weights& w, const DiscreteModel& model,
                                          int horizon, const std::vector<double>& masses,
                                          double uMax, const QpSettings& settings) {
  return CentralizedMpc(model, w, horizon, masses, uMax, neighbors, settings).solve(states).plans;
}

}  // namespace ringmpc
