#include "ringmpc/dynamics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

namespace ringmpc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Matrix9 = Eigen::Matrix<double, 9, 9>;

// Radix-2 Parlett-Reinsch balancing of the state block. Power-of-two factors
// keep the similarity transform free of rounding.
Vector6 balanceScaling(const Matrix6& a) {
  Matrix6 m = a;
  Vector6 d = Vector6::Ones();
  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    converged = true;
    for (int i = 0; i < 6; ++i) {
      double c = 0.0;
      double r = 0.0;
      for (int j = 0; j < 6; ++j) {
        if (j == i) continue;
        c += std::abs(m(j, i));
        r += std::abs(m(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      const double total = c + r;
      double f = 1.0;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c > r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if (c + r < 0.95 * total) {
        converged = false;
        d(i) *= f;
        m.col(i) *= f;
        m.row(i) /= f;
      }
    }
  }
  return d;
}

double powerOfTwoNear(double value) {
  if (value == 0.0 || !std::isfinite(value)) return 1.0;
  int exponent = 0;
  std::frexp(value, &exponent);
  return std::ldexp(1.0, exponent);
}

}  // namespace

double wrapAngle(double angle) {
  double wrapped = std::remainder(angle, kTwoPi);
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  return wrapped;
}

OrbitParams OrbitParams::fromRadius(double radius, double mu) {
  if (!(radius > kEarthEquatorialRadius)) {
    throw std::invalid_argument("reference orbit radius must exceed the Earth equatorial radius");
  }
  if (!(mu > 0.0)) throw std::invalid_argument("gravitational parameter must be positive");
  OrbitParams p;
  p.mu = mu;
  p.chiefRadius = radius;
  p.meanMotion = std::sqrt(mu / (radius * radius * radius));
  p.period = kTwoPi / p.meanMotion;
  return p;
}

OrbitParams OrbitParams::fromAltitude(double altitude, double mu, double bodyRadius) {
  return fromRadius(bodyRadius + altitude, mu);
}

Vector6 CylindricalState::vector() const {
  Vector6 v;
  v << rho, theta, z, rhoDot, thetaDot, zDot;
  return v;
}

CylindricalState CylindricalState::fromVector(const Vector6& v) {
  return {v(0), v(1), v(2), v(3), v(4), v(5)};
}

bool CylindricalState::isFinite() const { return vector().allFinite(); }

double CylindricalState::linearityRatio(const OrbitParams& params) const {
  const double r = params.chiefRadius;
  return std::max({std::abs(rho) / r, std::abs(z) / r, std::abs(thetaDot) / params.meanMotion});
}

ContinuousModel buildContinuousModel(const OrbitParams& params) {
  const double n = params.meanMotion;
  const double r = params.chiefRadius;
  ContinuousModel m;
  m.A(0, 3) = 1.0;
  m.A(1, 4) = 1.0;
  m.A(2, 5) = 1.0;
  m.A(3, 0) = 3.0 * n * n;
  m.A(3, 4) = 2.0 * r * n;
  m.A(4, 3) = -2.0 * n / r;
  m.A(5, 2) = -n * n;
  m.B(3, 0) = 1.0;
  m.B(4, 1) = 1.0 / r;
  m.B(5, 2) = 1.0;
  return m;
}

DiscreteModel discretize(const ContinuousModel& model, double sampleTime) {
  if (!(sampleTime > 0.0) || !std::isfinite(sampleTime)) {
    throw std::invalid_argument("sample time must be positive");
  }
  const Matrix6 a = model.A * sampleTime;
  const Matrix63 b = model.B * sampleTime;

  const Vector6 dx = balanceScaling(a);
  Eigen::Vector3d du;
  for (int j = 0; j < 3; ++j) {
    const double colNorm = (b.col(j).array() / dx.array()).abs().maxCoeff();
    du(j) = colNorm > 0.0 ? 1.0 / powerOfTwoNear(colNorm) : 1.0;
  }

  Matrix9 m = Matrix9::Zero();
  m.topLeftCorner<6, 6>() = dx.asDiagonal().inverse() * a * dx.asDiagonal();
  m.topRightCorner<6, 3>() = dx.asDiagonal().inverse() * b * du.asDiagonal();
  const Matrix9 e = m.exp();

  DiscreteModel out;
  out.sampleTime = sampleTime;
  out.A = dx.asDiagonal() * e.topLeftCorner<6, 6>() * dx.asDiagonal().inverse();
  out.B = dx.asDiagonal() * e.topRightCorner<6, 3>() * du.asDiagonal().inverse();
  return out;
}

CylindricalState propagateLinear(const DiscreteModel& model, const CylindricalState& x,
                                 const ThrustCommand& thrust, double mass) {
  const Vector6 next = model.A * x.vector() + model.B * (thrust.vector() / mass);
  return CylindricalState::fromVector(next);
}

CylindricalState eciToCylindrical(const Vector3& rEci, const Vector3& vEci, double chiefAngle,
                                  const OrbitParams& params) {
  const double x = rEci.x();
  const double y = rEci.y();
  const double planar = std::hypot(x, y);
  if (!(planar >= 0.5 * params.chiefRadius)) {
    throw FrameDegeneracyError("in-plane radius below half the reference radius");
  }
  CylindricalState s;
  s.rho = planar - params.chiefRadius;
  s.theta = wrapAngle(std::atan2(y, x) - chiefAngle);
  s.z = rEci.z();
  s.rhoDot = (x * vEci.x() + y * vEci.y()) / planar;
  s.thetaDot = (x * vEci.y() - y * vEci.x()) / (planar * planar) - params.meanMotion;
  s.zDot = vEci.z();
  return s;
}

std::pair<Vector3, Vector3> cylindricalToEci(const CylindricalState& x, double chiefAngle,
                                             const OrbitParams& params) {
  const double planar = params.chiefRadius + x.rho;
  const double phi = chiefAngle + x.theta;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double rate = x.thetaDot + params.meanMotion;
  Vector3 r{planar * c, planar * s, x.z};
  Vector3 v{x.rhoDot * c - planar * rate * s, x.rhoDot * s + planar * rate * c, x.zDot};
  return {r, v};
}

}  // namespace ringmpc
