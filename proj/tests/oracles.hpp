#pragma once

// Reference computations used only by the tests. None of them call into the
// library's numerics; they are deliberately simple and slow.

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <utility>

namespace oracle {

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;
using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

/// exp(M) by a fixed number of Taylor terms after scaling by 2^-s with
/// ||M / 2^s|| <= 1/2, then s squarings. Evaluated in long double.
MatrixXd seriesExp(const MatrixXd& m, int terms = 50);

/// Zero-order-hold pair from the augmented exponential [[A, B], [0, 0]] * Ts.
std::pair<MatrixXd, MatrixXd> seriesZoh(const MatrixXd& a, const MatrixXd& b, double ts, int terms = 50);

/// Classical RK4 on xdot = A x + B u with constant u.
VectorXd rk4Linear(const MatrixXd& a, const MatrixXd& b, const VectorXd& x0, const VectorXd& u,
                   double duration, int steps);

/// Classical RK4 on two-body motion with an acceleration callback a(r, v).
using Accel = std::function<Eigen::Vector3d(const Eigen::Vector3d&, const Eigen::Vector3d&)>;
std::pair<Eigen::Vector3d, Eigen::Vector3d> rk4TwoBody(Eigen::Vector3d r, Eigen::Vector3d v, double mu,
                                                       const Accel& accel, double duration, int steps);

/// Exact box QP minimizer by enumerating every lower/free/upper pattern and
/// keeping the best feasible stationary point. Practical for d <= 12.
VectorXd enumerateBoxQp(const MatrixXd& h, const VectorXd& f, const VectorXd& lo, const VectorXd& hi);

/// Accelerated projected gradient with adaptive restart run until the
/// iterate stops moving or maxIterations is reached.
VectorXd longRunBoxQp(const MatrixXd& h, const VectorXd& f, const VectorXd& lo, const VectorXd& hi,
                      int maxIterations = 1000000);

/// ||u - clip(u - (Hu + f))||_inf
double projectedGradient(const MatrixXd& h, const VectorXd& f, const VectorXd& lo, const VectorXd& hi,
                         const VectorXd& u);

/// Random SPD matrix with eigenvalues log-spaced over [1, cond].
MatrixXd randomSpd(int d, double cond, std::mt19937_64& rng);

}  // namespace oracle
