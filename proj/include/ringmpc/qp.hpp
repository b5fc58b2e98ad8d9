#pragma once

#include "ringmpc/dynamics.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Stacked condensed prediction over a horizon of Np steps:
/// [x(1); ...; x(Np)] = Phi * x0 + Gamma * [u(0); ...; u(Np-1)].
struct PredictionOperator {
  int horizon{};
  MatrixXd Phi;    // 6Np x 6
  MatrixXd Gamma;  // 6Np x 3Np

  int stateRow(int step, int component) const { return 6 * (step - 1) + component; }
};

PredictionOperator buildPrediction(const DiscreteModel& model, int horizon);

/// min 0.5 u'Hu + f'u  subject to  lower <= u <= upper.
struct QpProblem {
  MatrixXd H;
  VectorXd f;
  VectorXd lower;
  VectorXd upper;

  Eigen::Index dim() const { return f.size(); }
  double objective(const VectorXd& u) const { return 0.5 * u.dot(H * u) + f.dot(u); }
  /// Throws std::invalid_argument if dimensions, symmetry or bounds are inconsistent.
  void validate() const;
};

enum class QpStatus { Converged, MaxIterations, Stalled };

std::string toString(QpStatus status);

struct QpSolution {
  VectorXd uStar;
  double objective{};
  double kktResidual{};
  int iterations{};
  int factorizations{};
  QpStatus status{QpStatus::MaxIterations};
  VectorXd dual;  // multipliers, for solvers that work in the dual

  bool converged() const { return status == QpStatus::Converged; }
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QpSettings {
  double tolerance{1e-8};
  int maxIterations{200};
  double armijo{1e-4};
  double stepShrink{0.5};
  double minStep{1e-12};
};

/// Projected-gradient stationarity measure ||u - clip(u - (Hu + f))||_inf.
double kktResidual(const VectorXd& u, const VectorXd& gradient, const VectorXd& lower,
                   const VectorXd& upper);

/// Factorization of a Hessian restricted to a subset of free coordinates.
class FreeSetFactor {
 public:
  virtual ~FreeSetFactor() = default;
  /// Solves H_FF x_F = rhs_F. Entries of x outside the free set are zero.
  virtual VectorXd solve(const VectorXd& rhs) const = 0;
};

using FreeMask = std::vector<char>;

/// Symmetric positive definite Hessian seen only through products and
/// free-subspace solves, so structured problems can avoid forming a dense matrix.
class HessianOperator {
 public:
  virtual ~HessianOperator() = default;
  virtual Eigen::Index dim() const = 0;
  virtual VectorXd multiply(const VectorXd& x) const = 0;
  virtual std::unique_ptr<FreeSetFactor> factorFree(const FreeMask& free) const = 0;
};

/// Dense SPD matrix with a cached Cholesky factor of the full matrix.
class DenseHessian final : public HessianOperator {
 public:
  explicit DenseHessian(MatrixXd h);

  Eigen::Index dim() const override { return h_.rows(); }
  VectorXd multiply(const VectorXd& x) const override { return h_ * x; }
  std::unique_ptr<FreeSetFactor> factorFree(const FreeMask& free) const override;
  const MatrixXd& matrix() const { return h_; }

 private:
  MatrixXd h_;
  std::shared_ptr<const Eigen::LLT<MatrixXd>> full_;
};

/// One diagonal-plus-low-rank Hessian block diag(d) + W'W.
struct LowRankBlock {
  VectorXd diagonal;  // strictly positive
  MatrixXd rows;      // W, r x n
};

/// Box QP  min 0.5 x'Hx + f'x  with
///   H = blockdiag(diag(d_i) + W_i'W_i) + S'S,
///   (S x)_c = sum_i coupling(c, i) * g_i' x_i,
/// i.e. every block has its own low-rank rows and the blocks interact only
/// through a few coupling rows. A warm dual start is tried first with a few
/// semismooth Newton steps on the concave dual in the multipliers of
/// w = [W_1 x_1; ...; W_N x_N; S x]. Otherwise a primal-dual interior point
/// method runs, finished by the same dual Newton iteration once the gap is
/// small. Both Newton systems have the form I + W diag(c) W' and are factored
/// block by block with a Schur complement on the coupling rows.
class BlockLowRankQp {
 public:
  BlockLowRankQp(std::vector<std::shared_ptr<const LowRankBlock>> blocks,
                 std::vector<VectorXd> couplingVectors = {}, MatrixXd coupling = {});

  Eigen::Index dim() const { return dim_; }
  Eigen::Index dualDim() const { return dualDim_; }
  std::size_t blockCount() const { return blocks_.size(); }
  Eigen::Index blockOffset(std::size_t i) const { return offsets_[i]; }
  Eigen::Index dualOffset(std::size_t i) const { return dualOffsets_[i]; }
  Eigen::Index couplingRows() const { return coupling_.rows(); }

  VectorXd applyRows(const VectorXd& x) const;             // w = W x
  VectorXd applyRowsTransposed(const VectorXd& lambda) const;  // W' lambda
  VectorXd multiply(const VectorXd& x) const;              // H x
  double objective(const VectorXd& x, const VectorXd& f) const;
  /// Dense H, for verification on small instances.
  MatrixXd toDense() const;

  /// The returned solution carries the final multipliers in `dual`, which can
  /// seed the next solve. The convergence test is the primal KKT residual.
  QpSolution solve(const VectorXd& f, const VectorXd& lower, const VectorXd& upper,
                   const std::optional<VectorXd>& dualStart, const QpSettings& settings) const;

 private:
  static constexpr int kWarmDualIterations = 20;
  static constexpr int kPolishIterations = 4;
  static constexpr double kPolishGap = 1e-6;

  std::vector<std::shared_ptr<const LowRankBlock>> blocks_;
  std::vector<VectorXd> vectors_;
  MatrixXd coupling_;
  std::vector<Eigen::Index> offsets_;
  std::vector<Eigen::Index> dualOffsets_;
  Eigen::Index dim_{};
  Eigen::Index dualDim_{};
};

/// Projected Newton method for strictly convex box QPs. Clamped coordinates
/// (at a bound with the gradient pushing outward) are frozen, a Newton step is
/// taken on the rest, and a projected Armijo search keeps every iterate inside
/// the box. The objective is non-increasing across iterations.
QpSolution minimizeBoxQp(const HessianOperator& hessian, const VectorXd& f, const VectorXd& lower,
                         const VectorXd& upper, const VectorXd& start, const QpSettings& settings);

/// Solves a dense problem. Internally the box is mapped to [-1, 1] and the
/// Hessian scaled to unit maximum diagonal; the reported kktResidual and the
/// convergence test use that equilibrated problem.
QpSolution solveBoxQp(const QpProblem& p, const QpSettings& settings = {},
                      const std::optional<VectorXd>& warmStart = std::nullopt);

inline QpSolution solveBoxQp(const QpProblem& p, double tol, int maxIter) {
  QpSettings s;
  s.tolerance = tol;
  s.maxIterations = maxIter;
  return solveBoxQp(p, s);
}

/// Reusable solver for a fixed Hessian and box with a changing linear term,
/// which is the receding-horizon pattern. Equilibration and the full Cholesky
/// factor are computed once.
class BoxQpSolver {
 public:
  BoxQpSolver(const MatrixXd& h, const VectorXd& lower, const VectorXd& upper,
              QpSettings settings = {});

  QpSolution solve(const VectorXd& f, const std::optional<VectorXd>& warmStart = std::nullopt) const;
  Eigen::Index dim() const { return scale_.size(); }

 private:
  VectorXd center_;
  VectorXd scale_;
  VectorXd lower_;
  VectorXd upper_;
  VectorXd lowerN_;
  VectorXd upperN_;
  double objectiveScale_{1.0};
  MatrixXd hessianRaw_;
  std::shared_ptr<const DenseHessian> hessian_;
  QpSettings settings_;
};

/// Shifts a stacked input sequence one block earlier and repeats the last block.
VectorXd shiftWarmStart(const VectorXd& u, int blockSize);

/// Text dump of a solved problem: a header line "ringmpc-qp <d>", then the
/// blocks "H" (d rows of d values), "f", "lower", "upper" and "u" (one row
/// of d values each). Values are written with 17 significant digits.
void writeQpDump(std::ostream& os, const QpProblem& p, const VectorXd& uStar);
std::pair<QpProblem, VectorXd> readQpDump(std::istream& is);

}  // namespace ringmpc
