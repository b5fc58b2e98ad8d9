#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>

namespace ringmpc {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Matrix63 = Eigen::Matrix<double, 6, 3>;

constexpr double kMuEarth = 3.986004418e14;         // m^3/s^2
constexpr double kEarthMeanRadius = 6371.0e3;       // m
constexpr double kEarthEquatorialRadius = 6378137.0; // m

/// Wraps an angle to (-pi, pi].
double wrapAngle(double angle);

/// Circular reference orbit of the virtual chief.
struct OrbitParams {
  double mu{kMuEarth};
  double chiefRadius{};  // m
  double meanMotion{};   // rad/s
  double period{};       // s

  static OrbitParams fromRadius(double radius, double mu = kMuEarth);
  static OrbitParams fromAltitude(double altitude, double mu = kMuEarth,
                                  double bodyRadius = kEarthMeanRadius);
};

/// Relative state in cylindrical coordinates about the chief orbit.
/// Index order of the vector form is (rho, theta, z, rhoDot, thetaDot, zDot).
struct CylindricalState {
  double rho{};       // m
  double theta{};     // rad
  double z{};         // m
  double rhoDot{};    // m/s
  double thetaDot{};  // rad/s
  double zDot{};      // m/s

  Vector6 vector() const;
  static CylindricalState fromVector(const Vector6& v);
  bool isFinite() const;

  /// Largest of |rho|/R, |z|/R and |thetaDot|/n. The linear model is only
  /// trustworthy while this stays well below one.
  double linearityRatio(const OrbitParams& params) const;
};

/// Thrust in the local radial / along-track / cross-track axes (N).
struct ThrustCommand {
  double radial{};
  double alongTrack{};
  double crossTrack{};

  Vector3 vector() const { return {radial, alongTrack, crossTrack}; }
  static ThrustCommand fromVector(const Vector3& v) { return {v.x(), v.y(), v.z()}; }
  double maxAbs() const { return vector().cwiseAbs().maxCoeff(); }
};

/// Linearized cylindrical relative dynamics. Inputs are accelerations
/// (m/s^2) along radial, along-track and cross-track axes.
struct ContinuousModel {
  Matrix6 A{Matrix6::Zero()};
  Matrix63 B{Matrix63::Zero()};
};

/// Zero-order-hold discretization of a ContinuousModel. B maps accelerations.
struct DiscreteModel {
  Matrix6 A{Matrix6::Identity()};
  Matrix63 B{Matrix63::Zero()};
  double sampleTime{};
};

class FrameDegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ContinuousModel buildContinuousModel(const OrbitParams& params);

/// Exact ZOH pair via the exponential of the augmented matrix [A B; 0 0]*Ts.
/// The augmented matrix is balanced with power-of-two diagonal scaling first,
/// because the raw entries span roughly 17 orders of magnitude.
DiscreteModel discretize(const ContinuousModel& model, double sampleTime);

/// One ZOH step. Thrust is divided by mass to get the modelled acceleration.
CylindricalState propagateLinear(const DiscreteModel& model, const CylindricalState& x,
                                 const ThrustCommand& thrust, double mass);

/// Inertial position/velocity to cylindrical coordinates about a chief at
/// polar angle chiefAngle in the inertial X-Y plane. theta is wrapped to (-pi, pi].
CylindricalState eciToCylindrical(const Vector3& rEci, const Vector3& vEci, double chiefAngle,
                                  const OrbitParams& params);

std::pair<Vector3, Vector3> cylindricalToEci(const CylindricalState& x, double chiefAngle,
                                             const OrbitParams& params);

}  // namespace ringmpc
