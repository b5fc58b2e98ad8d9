#pragma once

#include "ringmpc/dynamics.hpp"

#include <stdexcept>

namespace ringmpc {

struct InertialState {
  Vector3 r{Vector3::Zero()};  // m, ECI
  Vector3 v{Vector3::Zero()};  // m/s, ECI
};

enum class IntegratorMethod { DormandPrince54 };

struct IntegratorConfig {
  double relTol{1e-10};
  double absTol{1e-9};
  double maxStep{60.0};  // s
  IntegratorMethod method{IntegratorMethod::DormandPrince54};

  void validate() const;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double lastValidTime)
      : std::runtime_error(what), lastValidTime_(lastValidTime) {}
  double lastValidTime() const { return lastValidTime_; }

 private:
  double lastValidTime_;
};

struct StateDerivative {
  Vector3 rDot;
  Vector3 vDot;
};

/// Point-mass gravity plus an applied inertial acceleration.
StateDerivative twoBodyDerivative(const InertialState& s, const Vector3& aControl, double mu);

/// Specific orbital energy v^2/2 - mu/|r|.
double specificEnergy(const InertialState& s, double mu);

/// Rotates a thrust given in the spacecraft's own cylindrical axes (radial,
/// along-track in the X-Y plane, inertial Z) into ECI, divided by mass.
Vector3 lvlhAccelerationToEci(const Vector3& r, const ThrustCommand& thrust, double mass);

struct PropagationStats {
  int acceptedSteps{};
  int rejectedSteps{};
};

/// Integrates two-body motion over dt with thrust held constant in the
/// rotating local frame, re-evaluated at every stage from the current position.
InertialState propagateTruth(const InertialState& s, const ThrustCommand& thrustLvlh, double mass,
                             double dt, const IntegratorConfig& cfg, const OrbitParams& params,
                             PropagationStats* stats = nullptr);

/// Polar angle of the virtual chief at time t, unwrapped.
double chiefAngleAt(double t, const OrbitParams& params);

}  // namespace ringmpc
