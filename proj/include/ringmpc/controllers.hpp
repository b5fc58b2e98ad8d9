#pragma once

#include "ringmpc/dynamics.hpp"
#include "ringmpc/qp.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ringmpc {

enum class ControllerKind { Centralized, FullyDecentralized, InformationSharing };

/// "CentMPC", "FD-MPC", "DMPC-IS".
std::string toString(ControllerKind kind);
/// Accepts the names above case-insensitively, plus "cent", "fd" and "is".
ControllerKind parseControllerKind(const std::string& name);

struct Weights {
  double alphaRho{1e-5};    // per (rho / rhoUnit)^2
  double alphaTheta{1.0};   // 1/rad^2
  double alphaU{2.5e-3};    // 1/N^2
  double alphaEnd{1e5};
  double rhoUnit{1e3};      // m; rho enters the cost in km

  /// Weight per m^2 of rho.
  double rhoWeight() const { return alphaRho / (rhoUnit * rhoUnit); }
  void validate() const;
};

/// What spacecraft i knows about one neighbor: a single sensed angle, or a
/// shared prediction theta_j(0..Np).
struct NeighborTrack {
  int id{};
  std::vector<double> theta;
  bool degraded{false};  // expected a shared track but fell back to the sensed angle
};

struct NeighborInfo {
  std::vector<NeighborTrack> tracks;

  int degradedCount() const;
};

/// Mean of wrap(theta_j(k) - thetaSelf) over the neighbors. Length-1 tracks
/// are held constant over the horizon.
double setpointOffset(double thetaSelf, const NeighborInfo& neighbors, int k);

/// Circular-mean setpoint thetaSelf + setpointOffset(...).
double angularSetpoint(double thetaSelf, const NeighborInfo& neighbors, int k);

struct ControlPlan {
  std::vector<ThrustCommand> inputs;         // u(0..Np-1), N
  std::vector<CylindricalState> predicted;   // x(1..Np)
  std::vector<double> theta;                 // theta(0..Np), continuous from x0.theta
  QpSolution qp;                             // uStar stacked in N
  double solveSeconds{};

  int horizon() const { return static_cast<int>(inputs.size()); }
  const ThrustCommand& first() const { return inputs.front(); }
  double maxAbsInput() const;
  /// Trajectory to publish for the next step: theta(1..Np) followed by
  /// theta(Np) + thetaDot(Np) * sampleTime.
  std::vector<double> sharedTrajectory(double sampleTime) const;
};

/// Pieces of the condensed local cost. With U the stacked thrusts,
///   rho part:   0.5 U' hessianBase U + (rhoGain x0)' U + const
///   theta(Np) = x0.theta + thetaDrift . x0 + thetaGain . U
/// where the theta entry of x0 is ignored by rhoGain and thetaDrift.
struct LocalCostTerms {
  int horizon{};
  double mass{};
  PredictionOperator prediction;  // in acceleration units, as built from the model
  MatrixXd hessianBase;
  MatrixXd rhoRows;    // rho(1..Np) rows of the prediction per unit thrust
  VectorXd rhoWeight;  // weight of each rho(k)^2 term
  MatrixXd rhoGain;
  Vector6 thetaDrift;
  VectorXd thetaGain;
  double terminalThetaWeight{};  // alphaEnd * alphaTheta
};

LocalCostTerms buildLocalCostTerms(const DiscreteModel& model, const Weights& w, int horizon,
                                   double mass);

/// Condensed local problem over thrust in N with terminal setpoint theta-bar.
QpProblem buildLocalCost(const CylindricalState& x0, double setpointTerminal, const Weights& w,
                         const PredictionOperator& pred, double mass, int horizon, double uMax);

/// Same cost evaluated directly by rolling the model forward, constants included.
double evaluateLocalCost(const DiscreteModel& model, const Weights& w, const CylindricalState& x0,
                         double setpointTerminal, const std::vector<ThrustCommand>& inputs,
                         double mass);

/// Rolls x0 forward under the given thrusts and fills the predicted states and
/// theta trajectory of a plan.
void fillPrediction(ControlPlan& plan, const DiscreteModel& model, const CylindricalState& x0,
                    double mass);

/// Per-spacecraft MPC. Used for FD-MPC and DMPC-IS; the two differ only in the
/// neighbor information they receive. The warm start is the previous plan's
/// qp.dual; the multipliers change slowly between steps.
class LocalMpc {
 public:
  LocalMpc(const DiscreteModel& model, const Weights& w, int horizon, double mass, double uMax,
           QpSettings settings = {});

  /// Solves with terminal setpoint x0.theta + offset.
  ControlPlan solveForOffset(const CylindricalState& x0, double offset,
                             const std::optional<VectorXd>& warm = std::nullopt) const;
  ControlPlan solve(const CylindricalState& x0, double setpointTerminal,
                    const std::optional<VectorXd>& warm = std::nullopt) const;
  /// Requires every track to have length 1.
  ControlPlan solveFd(const CylindricalState& x0, const NeighborInfo& info,
                      const std::optional<VectorXd>& warm = std::nullopt) const;
  /// Requires every track to have length Np+1.
  ControlPlan solveDmpcIs(const CylindricalState& x0, const NeighborInfo& info,
                          const std::optional<VectorXd>& warm = std::nullopt) const;

  int horizon() const { return terms_.horizon; }
  const LocalCostTerms& terms() const { return terms_; }

 private:
  DiscreteModel model_;
  LocalCostTerms terms_;
  double uMax_;
  QpSettings settings_;
  double objectiveScale_{1.0};
  std::unique_ptr<BlockLowRankQp> qp_;
};


ControlPlan solveFdMpc(const CylindricalState& x0, const std::vector<double>& neighborAngles,
                       const Weights& w, const DiscreteModel& model, int horizon, double mass,
                       double uMax, const QpSettings& settings = {});

ControlPlan solveDmpcIs(const CylindricalState& x0,
                        const std::vector<std::vector<double>>& neighborTrajectories,
                        const Weights& w, const DiscreteModel& model, int horizon, double mass,
                        double uMax, const QpSettings& settings = {});

struct CentralizedResult {
  std::vector<ControlPlan> plans;
  QpSolution qp;  // stacked, in normalized units u / uMax
  double objective{};  // joint QP objective in physical units, constants excluded
  double solveSeconds{};
};

/// Joint MPC over all spacecraft. The terminal angular cost couples each
/// spacecraft to the predicted terminal angles of its neighbors; the Hessian
/// is kept in block-plus-coupling form.
class CentralizedMpc {
 public:
  /// neighbors[i] lists indices into the state vector (duplicates allowed).
  CentralizedMpc(const DiscreteModel& model, const Weights& w, int horizon,
                 std::vector<double> masses, double uMax, std::vector<std::vector<int>> neighbors,
                 QpSettings settings = {});

  /// Without a warm dual the solve is seeded from decoupled local plans.
  CentralizedResult solve(const std::vector<CylindricalState>& states,
                          const std::optional<VectorXd>& warm = std::nullopt) const;

  /// Joint cost with constants, evaluated by rolling each spacecraft forward.
  double jointCost(const std::vector<CylindricalState>& states,
                   const std::vector<std::vector<ThrustCommand>>& inputs) const;

  std::size_t size() const { return masses_.size(); }
  int horizon() const { return horizon_; }
  /// Normalized joint problem over u / uMax.
  const BlockLowRankQp& problem() const { return *qp_; }

 private:
  DiscreteModel model_;
  Weights weights_;
  int horizon_;
  std::vector<double> masses_;
  double uMax_;
  std::vector<std::vector<int>> neighbors_;
  QpSettings settings_;
  std::vector<std::shared_ptr<const LocalCostTerms>> terms_;
  std::vector<std::shared_ptr<const LocalMpc>> seeds_;  // per spacecraft, for cold starts
  MatrixXd laplacian_;  // I - W
  double objectiveScale_{1.0};
  std::unique_ptr<BlockLowRankQp> qp_;
};

std::vector<ControlPlan> solveCentralized(const std::vector<CylindricalState>& states,
                                          const std::vector<std::vector<int>>& neighbors,
                                          const Weights& w, const DiscreteModel& model,
                                          int horizon, const std::vector<double>& masses,
                                          double uMax, const QpSettings& settings = {});

}  // namespace ringmpc
