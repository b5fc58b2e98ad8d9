#include "ringmpc/truth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace ringmpc {

namespace {

using State = Vector6;  // r then v

// Dormand-Prince 5(4) tableau. The right-hand side is autonomous, so the
// stage nodes are not needed.
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// difference between 5th and embedded 4th order weights
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

State rhs(const State& y, const ThrustCommand& thrust, double mass, double mu) {
  InertialState s{y.head<3>(), y.tail<3>()};
  const Vector3 a = lvlhAccelerationToEci(s.r, thrust, mass);
  const StateDerivative d = twoBodyDerivative(s, a, mu);
  State out;
  out << d.rDot, d.vDot;
  return out;
}

}  // namespace

void IntegratorConfig::validate() const {
  auto inRange = [](double t) { return t >= 1e-14 && t <= 1e-3; };
  if (!inRange(relTol) || !inRange(absTol)) {
    throw std::invalid_argument("integrator tolerances must lie in [1e-14, 1e-3]");
  }
  if (!(maxStep > 0.0)) throw std::invalid_argument("integrator maxStep must be positive");
}

StateDerivative twoBodyDerivative(const InertialState& s, const Vector3& aControl, double mu) {
  const double r = s.r.norm();
  if (r == 0.0) throw std::domain_error("two-body derivative is singular at the origin");
  return {s.v, -mu * s.r / (r * r * r) + aControl};
}

double specificEnergy(const InertialState& s, double mu) {
  return 0.5 * s.v.squaredNorm() - mu / s.r.norm();
}

Vector3 lvlhAccelerationToEci(const Vector3& r, const ThrustCommand& thrust, double mass) {
  const double planar = std::hypot(r.x(), r.y());
  if (planar == 0.0) return {0.0, 0.0, thrust.crossTrack / mass};
  const Vector3 radial{r.x() / planar, r.y() / planar, 0.0};
  const Vector3 along{-radial.y(), radial.x(), 0.0};
  return (thrust.radial * radial + thrust.alongTrack * along + thrust.crossTrack * Vector3::UnitZ()) /
         mass;
}

InertialState propagateTruth(const InertialState& s, const ThrustCommand& thrustLvlh, double mass,
                             double dt, const IntegratorConfig& cfg, const OrbitParams& params,
                             PropagationStats* stats) {
  cfg.validate();
  if (!(dt >= 0.0)) throw std::invalid_argument("propagation interval must be non-negative");
  State y;
  y << s.r, s.v;
  if (dt == 0.0) return s;

  const double mu = params.mu;
  double t = 0.0;
  double h = std::min(cfg.maxStep, dt);
  State k1 = rhs(y, thrustLvlh, mass, mu);
  PropagationStats local;

  while (t < dt) {
    bool last = false;
    if (t + h >= dt) {
      h = dt - t;
      last = true;
    }
    const double hMin = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < hMin) throw IntegrationError("step size underflow", t);

    const State k2 = rhs(y + h * (a21 * k1), thrustLvlh, mass, mu);
    const State k3 = rhs(y + h * (a31 * k1 + a32 * k2), thrustLvlh, mass, mu);
    const State k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3), thrustLvlh, mass, mu);
    const State k5 = rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), thrustLvlh, mass, mu);
    const State k6 =
        rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), thrustLvlh, mass, mu);
    const State yNew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const State k7 = rhs(yNew, thrustLvlh, mass, mu);
    const State errVec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double scale = cfg.absTol + cfg.relTol * std::max(std::abs(y(i)), std::abs(yNew(i)));
      err = std::max(err, std::abs(errVec(i)) / scale);
    }
    if (!std::isfinite(err)) throw IntegrationError("non-finite state during integration", t);

    if (err <= 1.0) {
      t = last ? dt : t + h;
      y = yNew;
      k1 = k7;
      ++local.acceptedSteps;
      const double grow = err == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err, -0.2));
      h = std::min(cfg.maxStep, h * grow);
    } else {
      ++local.rejectedSteps;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  if (stats) *stats = local;
  return {y.head<3>(), y.tail<3>()};
}

double chiefAngleAt(double t, const OrbitParams& params) { return params.meanMotion * t; }

}  // namespace ringmpc
