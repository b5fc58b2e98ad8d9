#include "ringmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ringmpc {

namespace {

class FullFactor final : public FreeSetFactor {
 public:
  explicit FullFactor(std::shared_ptr<const Eigen::LLT<MatrixXd>> llt) : llt_(std::move(llt)) {}
  VectorXd solve(const VectorXd& rhs) const override { return llt_->solve(rhs); }

 private:
  std::shared_ptr<const Eigen::LLT<MatrixXd>> llt_;
};

class SubsetFactor final : public FreeSetFactor {
 public:
  SubsetFactor(const MatrixXd& h, const FreeMask& free) : n_(h.rows()) {
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (free[i]) index_.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(index_.size());
    MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = h(index_[a], index_[b]);
    }
    llt_.compute(sub);
    if (llt_.info() != Eigen::Success) {
      throw std::runtime_error("Hessian is not positive definite on the free set");
    }
  }

  VectorXd solve(const VectorXd& rhs) const override {
    const auto m = static_cast<Eigen::Index>(index_.size());
    VectorXd r(m);
    for (Eigen::Index a = 0; a < m; ++a) r(a) = rhs(index_[a]);
    const VectorXd s = llt_.solve(r);
    VectorXd out = VectorXd::Zero(n_);
    for (Eigen::Index a = 0; a < m; ++a) out(index_[a]) = s(a);
    return out;
  }

 private:
  Eigen::Index n_;
  std::vector<Eigen::Index> index_;
  Eigen::LLT<MatrixXd> llt_;
};

VectorXd clamp(const VectorXd& x, const VectorXd& lower, const VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

struct Equilibration {
  VectorXd center;
  VectorXd scale;
  VectorXd lower;
  VectorXd upper;
};

Equilibration equilibrate(const VectorXd& lower, const VectorXd& upper) {
  Equilibration e;
  e.center = 0.5 * (lower + upper);
  e.scale = 0.5 * (upper - lower);
  for (Eigen::Index i = 0; i < e.scale.size(); ++i) {
    if (e.scale(i) <= 0.0) e.scale(i) = 1.0;
  }
  e.lower = ((lower - e.center).array() / e.scale.array()).matrix();
  e.upper = ((upper - e.center).array() / e.scale.array()).matrix();
  return e;
}

void validateBox(const VectorXd& lower, const VectorXd& upper, Eigen::Index d) {
  if (lower.size() != d || upper.size() != d) {
    throw std::invalid_argument("box dimension does not match the problem");
  }
  if (!lower.allFinite() || !upper.allFinite()) throw std::invalid_argument("box bounds must be finite");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("box lower bound exceeds upper bound");
}

}  // namespace

std::string toString(QpStatus status) {
  switch (status) {
    case QpStatus::Converged: return "converged";
    case QpStatus::MaxIterations: return "max-iterations";
    case QpStatus::Stalled: return "stalled";
  }
  return "unknown";
}

PredictionOperator buildPrediction(const DiscreteModel& model, int horizon) {
  if (horizon < 1) throw std::invalid_argument("prediction horizon must be at least 1");
  PredictionOperator p;
  p.horizon = horizon;
  p.Phi = MatrixXd::Zero(6 * horizon, 6);
  p.Gamma = MatrixXd::Zero(6 * horizon, 3 * horizon);

  std::vector<Matrix63> powersTimesB(horizon);
  powersTimesB[0] = model.B;
  for (int m = 1; m < horizon; ++m) powersTimesB[m] = model.A * powersTimesB[m - 1];

  Matrix6 power = model.A;
  for (int k = 1; k <= horizon; ++k) {
    p.Phi.block<6, 6>(6 * (k - 1), 0) = power;
    power = model.A * power;
    for (int j = 0; j < k; ++j) p.Gamma.block<6, 3>(6 * (k - 1), 3 * j) = powersTimesB[k - 1 - j];
  }
  return p;
}

void QpProblem::validate() const {
  const Eigen::Index d = f.size();
  if (d == 0) throw std::invalid_argument("empty QP");
  if (H.rows() != d || H.cols() != d) throw std::invalid_argument("Hessian dimension mismatch");
  if (!H.allFinite() || !f.allFinite()) throw std::invalid_argument("QP data must be finite");
  const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("Hessian is not symmetric");
  }
  validateBox(lower, upper, d);
}

double kktResidual(const VectorXd& u, const VectorXd& gradient, const VectorXd& lower,
                   const VectorXd& upper) {
  return (u - clamp(u - gradient, lower, upper)).cwiseAbs().maxCoeff();
}

DenseHessian::DenseHessian(MatrixXd h) : h_(std::move(h)) {
  auto llt = std::make_shared<Eigen::LLT<MatrixXd>>(h_);
  if (llt->info() != Eigen::Success) throw std::invalid_argument("Hessian is not positive definite");
  full_ = std::move(llt);
}

std::unique_ptr<FreeSetFactor> DenseHessian::factorFree(const FreeMask& free) const {
  bool all = true;
  for (char c : free) all = all && c;
  if (all) return std::make_unique<FullFactor>(full_);
  return std::make_unique<SubsetFactor>(h_, free);
}

namespace {

// Factored I + W P W' for a non-negative diagonal P, block by block with a
// Schur complement on the coupling rows. Blocks whose slice of P is unchanged
// keep their factor.
class LowRankSystem {
 public:
  LowRankSystem(const std::vector<std::shared_ptr<const LowRankBlock>>& blocks,
                const std::vector<VectorXd>& vectors, const MatrixXd& coupling,
                const std::vector<Eigen::Index>& offsets)
      : blocks_(blocks), vectors_(vectors), coupling_(coupling), offsets_(offsets), parts_(blocks.size()) {}

  // Returns the number of blocks refactored.
  int update(const VectorXd& weight) {
    int refactored = 0;
    const bool coupled = coupling_.rows() > 0;
    VectorXd kappa(static_cast<Eigen::Index>(blocks_.size()));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const LowRankBlock& b = *blocks_[i];
      const Eigen::Index n = b.diagonal.size();
      Part& part = parts_[i];
      const auto slice = weight.segment(offsets_[i], n);
      if (!part.valid || slice != part.weight) {
        // only columns with a positive weight contribute
        Eigen::Index cols = 0;
        scaled_.resize(b.rows.rows(), n);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (slice(j) > 0.0) scaled_.col(cols++) = std::sqrt(slice(j)) * b.rows.col(j);
        }
        MatrixXd m = MatrixXd::Identity(b.rows.rows(), b.rows.rows());
        m.selfadjointView<Eigen::Lower>().rankUpdate(scaled_.leftCols(cols));
        part.llt.compute(m);
        if (coupled) {
          const VectorXd gs = slice.cwiseProduct(vectors_[i]);
          part.a = b.rows * gs;
          part.q = part.llt.solve(part.a);
          part.kappa = vectors_[i].dot(gs) - part.a.dot(part.q);
        }
        part.weight = slice;
        part.valid = true;
        ++refactored;
      }
      if (coupled) kappa(static_cast<Eigen::Index>(i)) = part.kappa;
    }
    if (coupled && (refactored > 0 || !schurValid_)) {
      MatrixXd s = MatrixXd::Identity(coupling_.rows(), coupling_.rows());
      s.noalias() += coupling_ * kappa.asDiagonal() * coupling_.transpose();
      schur_.compute(s);
      schurValid_ = true;
    }
    return refactored;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd out(rhs.size());
    const auto nb = static_cast<Eigen::Index>(blocks_.size());
    const bool coupled = coupling_.rows() > 0;
    VectorXd h(nb);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Eigen::Index r = blocks_[i]->rows.rows();
      out.segment(row, r) = parts_[i].llt.solve(rhs.segment(row, r));
      if (coupled) h(static_cast<Eigen::Index>(i)) = parts_[i].a.dot(out.segment(row, r));
      row += r;
    }
    if (!coupled) return out;
    const VectorXd xc = schur_.solve(rhs.tail(coupling_.rows()) - coupling_ * h);
    out.tail(coupling_.rows()) = xc;
    const VectorXd sc = coupling_.transpose() * xc;
    row = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Eigen::Index r = blocks_[i]->rows.rows();
      out.segment(row, r) -= sc(static_cast<Eigen::Index>(i)) * parts_[i].q;
      row += r;
    }
    return out;
  }

 private:
  struct Part {
    VectorXd weight;
    bool valid{false};
    Eigen::LLT<MatrixXd> llt;
    VectorXd a;
    VectorXd q;
    double kappa{};
  };

  const std::vector<std::shared_ptr<const LowRankBlock>>& blocks_;
  const std::vector<VectorXd>& vectors_;
  const MatrixXd& coupling_;
  const std::vector<Eigen::Index>& offsets_;
  std::vector<Part> parts_;
  Eigen::LLT<MatrixXd> schur_;
  bool schurValid_{false};
  MatrixXd scaled_;
};

// largest step in (0, 1] keeping v + t dv >= 0
double stepToBoundary(const VectorXd& v, const VectorXd& dv) {
  double t = 1.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (dv(j) < 0.0) t = std::min(t, -v(j) / dv(j));
  }
  return t;
}

}  // namespace

BlockLowRankQp::BlockLowRankQp(std::vector<std::shared_ptr<const LowRankBlock>> blocks,
                               std::vector<VectorXd> couplingVectors, MatrixXd coupling)
    : blocks_(std::move(blocks)), vectors_(std::move(couplingVectors)), coupling_(std::move(coupling)) {
  if (blocks_.empty()) throw std::invalid_argument("low-rank QP needs at least one block");
  const auto nb = static_cast<Eigen::Index>(blocks_.size());
  const bool coupled = coupling_.size() > 0;
  if (coupled && (coupling_.cols() != nb || static_cast<Eigen::Index>(vectors_.size()) != nb)) {
    throw std::invalid_argument("coupling rows need one column and one vector per block");
  }
  if (!coupled) coupling_.resize(0, nb);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const LowRankBlock& b = *blocks_[i];
    if (b.rows.cols() != b.diagonal.size()) throw std::invalid_argument("low-rank rows do not match the block");
    if (!(b.diagonal.array() > 0.0).all()) throw std::invalid_argument("block diagonal must be positive");
    if (coupled && vectors_[i].size() != b.diagonal.size()) {
      throw std::invalid_argument("coupling vector does not match its block");
    }
    offsets_.push_back(dim_);
    dualOffsets_.push_back(dualDim_);
    dim_ += b.diagonal.size();
    dualDim_ += b.rows.rows();
  }
  dualDim_ += coupling_.rows();
}

VectorXd BlockLowRankQp::applyRows(const VectorXd& x) const {
  VectorXd w(dualDim_);
  const auto nb = static_cast<Eigen::Index>(blocks_.size());
  VectorXd y(nb);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const LowRankBlock& b = *blocks_[i];
    const auto xi = x.segment(offsets_[i], b.diagonal.size());
    w.segment(dualOffsets_[i], b.rows.rows()).noalias() = b.rows * xi;
    if (coupling_.rows() > 0) y(static_cast<Eigen::Index>(i)) = vectors_[i].dot(xi);
  }
  if (coupling_.rows() > 0) w.tail(coupling_.rows()) = coupling_ * y;
  return w;
}

VectorXd BlockLowRankQp::applyRowsTransposed(const VectorXd& lambda) const {
  VectorXd x(dim_);
  VectorXd sc;
  if (coupling_.rows() > 0) sc = coupling_.transpose() * lambda.tail(coupling_.rows());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const LowRankBlock& b = *blocks_[i];
    auto xi = x.segment(offsets_[i], b.diagonal.size());
    xi.noalias() = b.rows.transpose() * lambda.segment(dualOffsets_[i], b.rows.rows());
    if (coupling_.rows() > 0) xi += sc(static_cast<Eigen::Index>(i)) * vectors_[i];
  }
  return x;
}

VectorXd BlockLowRankQp::multiply(const VectorXd& x) const {
  VectorXd out = applyRowsTransposed(applyRows(x));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const VectorXd& d = blocks_[i]->diagonal;
    out.segment(offsets_[i], d.size()).array() += d.array() * x.segment(offsets_[i], d.size()).array();
  }
  return out;
}

double BlockLowRankQp::objective(const VectorXd& x, const VectorXd& f) const {
  double quad = applyRows(x).squaredNorm();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const VectorXd& d = blocks_[i]->diagonal;
    quad += (d.array() * x.segment(offsets_[i], d.size()).array().square()).sum();
  }
  return 0.5 * quad + f.dot(x);
}

MatrixXd BlockLowRankQp::toDense() const {
  MatrixXd h(dim_, dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) h.col(j) = multiply(VectorXd::Unit(dim_, j));
  return 0.5 * (h + h.transpose());
}

QpSolution BlockLowRankQp::solve(const VectorXd& f, const VectorXd& lower, const VectorXd& upper,
                                 const std::optional<VectorXd>& dualStart, const QpSettings& settings) const {
  validateBox(lower, upper, dim_);
  if (f.size() != dim_) throw std::invalid_argument("linear term dimension mismatch");
  if (!lower.allFinite() || !upper.allFinite() || !(lower.array() < upper.array()).all()) {
    throw std::invalid_argument("low-rank QP needs a finite box with lower < upper");
  }
  VectorXd d(dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) d.segment(offsets_[i], blocks_[i]->diagonal.size()) = blocks_[i]->diagonal;

  LowRankSystem system(blocks_, vectors_, coupling_, offsets_);
  QpSolution sol;
  sol.status = QpStatus::MaxIterations;
  sol.kktResidual = std::numeric_limits<double>::infinity();
  VectorXd x(dim_);
  VectorXd weight(dim_);
  std::vector<std::pair<double, double>> events;  // (step, change of curvature)

  // Semismooth Newton on the concave dual in the multipliers of the rows,
  //   phi(lambda) = min_box 0.5 x'Dx + (f + W'lambda)'x - 0.5 |lambda|^2.
  // Fast once the active set is nearly right; used for warm starts and to
  // finish the interior-point iterate.
  auto dualNewton = [&](VectorXd lambda, int maxIterations) {
    VectorXd z = f + applyRowsTransposed(lambda);
    VectorXd u(dim_);
    double kkt = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
      for (Eigen::Index j = 0; j < dim_; ++j) {
        const double c = -z(j) / d(j);
        const bool free = c > lower(j) && c < upper(j);
        weight(j) = free ? 1.0 / d(j) : 0.0;
        u(j) = std::clamp(c, lower(j), upper(j));
      }
      const VectorXd wu = applyRows(u);
      const VectorXd residual = wu - lambda;
      const VectorXd grad = (d.array() * u.array()).matrix() + f + applyRowsTransposed(wu);
      kkt = kktResidual(u, grad, lower, upper);
      if (kkt < sol.kktResidual) {
        sol.kktResidual = kkt;
        x = u;
        sol.dual = lambda;
      }
      if (kkt <= settings.tolerance || it == maxIterations) break;
      ++sol.iterations;

      sol.factorizations += system.update(weight);
      const VectorXd step = system.solve(residual);
      const VectorXd a = applyRowsTransposed(step);

      // exact maximization along the step: the derivative
      //   g(t) = a'u(t) - step'(lambda + t step)
      // is piecewise linear and decreasing, coordinate j adding curvature
      // a_j^2 / d_j while strictly inside its box
      double g = residual.dot(step);
      double curvature = step.squaredNorm();
      events.clear();
      for (Eigen::Index j = 0; j < dim_; ++j) {
        if (a(j) == 0.0) continue;
        const double k = a(j) * a(j) / d(j);
        const double tLow = (-z(j) - lower(j) * d(j)) / a(j);
        const double tHigh = (-z(j) - upper(j) * d(j)) / a(j);
        const double enter = std::min(tLow, tHigh);
        const double leave = std::max(tLow, tHigh);
        if (leave <= 0.0) continue;
        if (enter <= 0.0) {
          curvature += k;
        } else {
          events.emplace_back(enter, k);
        }
        events.emplace_back(leave, -k);
      }
      std::sort(events.begin(), events.end());
      double t = 0.0;
      bool found = false;
      for (const auto& [te, dk] : events) {
        const double gAt = g - curvature * (te - t);
        if (gAt <= 0.0) {
          t += g / curvature;
          found = true;
          break;
        }
        g = gAt;
        t = te;
        curvature += dk;
      }
      if (!found) t += g / curvature;
      if (!(t > settings.minStep)) break;
      lambda += t * step;
      z += t * a;
    }
    return kkt <= settings.tolerance;
  };

  auto finish = [&]() {
    sol.objective = objective(x, f);
    sol.uStar = x;
    return sol;
  };

  if (dualStart && dualStart->size() == dualDim_ && dualNewton(*dualStart, kWarmDualIterations)) {
    sol.status = QpStatus::Converged;
    return finish();
  }

  // Mehrotra predictor-corrector on the slack form x - l = sl, u - x = su.
  // The Newton matrix D + Sigma + W'W is inverted through Woodbury with the
  // same block factorization as the dual Newton matrix.
  const double m = 2.0 * static_cast<double>(dim_);
  VectorXd xi = 0.5 * (lower + upper);
  VectorXd zl = VectorXd::Ones(dim_);
  VectorXd zu = VectorXd::Ones(dim_);
  auto newtonSolve = [&](const VectorXd& r) {
    const VectorXd pr = weight.cwiseProduct(r);
    return VectorXd(weight.cwiseProduct(r - applyRowsTransposed(system.solve(applyRows(pr)))));
  };
  for (int it = 0; it < settings.maxIterations; ++it) {
    const VectorXd sl = xi - lower;
    const VectorXd su = upper - xi;
    const double mu = (sl.dot(zl) + su.dot(zu)) / m;
    const VectorXd grad = multiply(xi) + f;
    const VectorXd rd = grad - zl + zu;
    const double kkt = kktResidual(xi, grad, lower, upper);
    if (kkt < sol.kktResidual) {
      sol.kktResidual = kkt;
      x = xi;
    }
    if (kkt <= settings.tolerance) {
      sol.status = QpStatus::Converged;
      sol.dual = applyRows(x);
      return finish();
    }
    if (mu < kPolishGap && dualNewton(applyRows(xi), kPolishIterations)) {
      sol.status = QpStatus::Converged;
      return finish();
    }
    ++sol.iterations;

    weight = (d.array() + zl.array() / sl.array() + zu.array() / su.array()).inverse().matrix();
    sol.factorizations += system.update(weight);

    // affine step
    const VectorXd dxa = newtonSolve(-rd - zl + zu);
    const VectorXd dzla = -zl - (zl.array() * dxa.array() / sl.array()).matrix();
    const VectorXd dzua = -zu + (zu.array() * dxa.array() / su.array()).matrix();
    const double ap = std::min(stepToBoundary(sl, dxa), stepToBoundary(su, -dxa));
    const double ad = std::min(stepToBoundary(zl, dzla), stepToBoundary(zu, dzua));
    const double muAff = ((sl + ap * dxa).dot(zl + ad * dzla) + (su - ap * dxa).dot(zu + ad * dzua)) / m;
    const double sigma = std::pow(muAff / mu, 3);

    // centered corrector
    const VectorXd cl = (sigma * mu - (sl.array() * zl.array()) - dxa.array() * dzla.array()).matrix();
    const VectorXd cu = (sigma * mu - (su.array() * zu.array()) + dxa.array() * dzua.array()).matrix();
    const VectorXd dx = newtonSolve(-rd + (cl.array() / sl.array()).matrix() - (cu.array() / su.array()).matrix());
    const VectorXd dzl = ((cl.array() - zl.array() * dx.array()) / sl.array()).matrix();
    const VectorXd dzu = ((cu.array() + zu.array() * dx.array()) / su.array()).matrix();
    const double eta = std::max(0.99, 1.0 - mu);
    const double tp = eta * std::min(stepToBoundary(sl, dx), stepToBoundary(su, -dx));
    const double td = eta * std::min(stepToBoundary(zl, dzl), stepToBoundary(zu, dzu));
    xi += std::min(1.0, tp) * dx;
    zl += std::min(1.0, td) * dzl;
    zu += std::min(1.0, td) * dzu;
  }
  if (sol.dual.size() != dualDim_) sol.dual = applyRows(x);
  return finish();
}

QpSolution minimizeBoxQp(const HessianOperator& hessian, const VectorXd& f, const VectorXd& lower,
                         const VectorXd& upper, const VectorXd& start, const QpSettings& settings) {
  const Eigen::Index d = hessian.dim();
  QpSolution sol;
  VectorXd x = clamp(start.size() == d ? start : VectorXd::Zero(d), lower, upper);
  VectorXd g = hessian.multiply(x) + f;

  FreeMask mask(d, 1);
  FreeMask lastMask;
  std::unique_ptr<FreeSetFactor> factor;

  sol.status = QpStatus::MaxIterations;
  int it = 0;
  for (; it <= settings.maxIterations; ++it) {
    sol.kktResidual = kktResidual(x, g, lower, upper);
    if (sol.kktResidual <= settings.tolerance) {
      sol.status = QpStatus::Converged;
      break;
    }
    if (it == settings.maxIterations) break;

    for (Eigen::Index i = 0; i < d; ++i) {
      const bool clampedLow = x(i) <= lower(i) && g(i) > 0.0;
      const bool clampedHigh = x(i) >= upper(i) && g(i) < 0.0;
      mask[i] = !(clampedLow || clampedHigh);
    }
    if (!factor || mask != lastMask) {
      factor = hessian.factorFree(mask);
      lastMask = mask;
      ++sol.factorizations;
    }
    VectorXd rhs = -g;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!mask[i]) rhs(i) = 0.0;
    }
    const VectorXd direction = factor->solve(rhs);

    bool accepted = false;
    for (double step = 1.0; step >= settings.minStep; step *= settings.stepShrink) {
      const VectorXd trial = clamp(x + step * direction, lower, upper);
      const VectorXd delta = trial - x;
      if (delta.cwiseAbs().maxCoeff() == 0.0) break;
      const double slope = g.dot(delta);
      const double change = slope + 0.5 * delta.dot(hessian.multiply(delta));
      if (change < 0.0 && change <= settings.armijo * slope) {
        x = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      sol.status = QpStatus::Stalled;
      break;
    }
    g = hessian.multiply(x) + f;
  }
  sol.iterations = it;
  sol.objective = 0.5 * x.dot(g - f) + f.dot(x);
  sol.uStar = std::move(x);
  return sol;
}

QpSolution solveBoxQp(const QpProblem& p, const QpSettings& settings,
                      const std::optional<VectorXd>& warmStart) {
  p.validate();
  BoxQpSolver solver(p.H, p.lower, p.upper, settings);
  QpSolution sol = solver.solve(p.f, warmStart);
  sol.objective = p.objective(sol.uStar);
  return sol;
}

BoxQpSolver::BoxQpSolver(const MatrixXd& h, const VectorXd& lower, const VectorXd& upper,
                         QpSettings settings)
    : settings_(settings) {
  validateBox(lower, upper, h.rows());
  const Equilibration e = equilibrate(lower, upper);
  center_ = e.center;
  scale_ = e.scale;
  MatrixXd hn = scale_.asDiagonal() * h * scale_.asDiagonal();
  objectiveScale_ = hn.diagonal().maxCoeff();
  if (!(objectiveScale_ > 0.0)) throw std::invalid_argument("Hessian has no positive diagonal entry");
  hn /= objectiveScale_;
  hn = 0.5 * (hn + hn.transpose()).eval();
  hessian_ = std::make_shared<DenseHessian>(std::move(hn));
  hessianRaw_ = h;
  lower_ = lower;
  upper_ = upper;
  lowerN_ = e.lower;
  upperN_ = e.upper;
}

QpSolution BoxQpSolver::solve(const VectorXd& f, const std::optional<VectorXd>& warmStart) const {
  if (f.size() != dim()) throw std::invalid_argument("linear term dimension mismatch");
  const VectorXd fn = (scale_.array() * (hessianRaw_ * center_ + f).array()).matrix() / objectiveScale_;
  VectorXd start = VectorXd::Zero(dim());
  if (warmStart && warmStart->size() == dim()) {
    start = ((*warmStart - center_).array() / scale_.array()).matrix();
  }
  QpSolution sol = minimizeBoxQp(*hessian_, fn, lowerN_, upperN_, start, settings_);
  // unscaling can land an ulp outside the box
  VectorXd u = clamp(center_ + (scale_.array() * sol.uStar.array()).matrix(), lower_, upper_);
  sol.objective = 0.5 * u.dot(hessianRaw_ * u) + f.dot(u);
  sol.uStar = std::move(u);
  return sol;
}

VectorXd shiftWarmStart(const VectorXd& u, int blockSize) {
  const Eigen::Index n = u.size();
  if (n < blockSize || blockSize <= 0 || n % blockSize != 0) {
    throw std::invalid_argument("warm start length is not a multiple of the block size");
  }
  VectorXd out(n);
  out.head(n - blockSize) = u.tail(n - blockSize);
  out.tail(blockSize) = u.tail(blockSize);
  return out;
}

void writeQpDump(std::ostream& os, const QpProblem& p, const VectorXd& uStar) {
  const Eigen::Index d = p.dim();
  os << "ringmpc-qp " << d << '\n' << std::setprecision(17);
  auto row = [&](const char* name, const VectorXd& v) {
    os << name << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
    os << '\n';
  };
  os << "H\n";
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) os << (j ? " " : "") << p.H(i, j);
    os << '\n';
  }
  row("f", p.f);
  row("lower", p.lower);
  row("upper", p.upper);
  row("u", uStar);
}

std::pair<QpProblem, VectorXd> readQpDump(std::istream& is) {
  std::string tag;
  Eigen::Index d = 0;
  if (!(is >> tag >> d) || tag != "ringmpc-qp" || d <= 0) {
    throw std::runtime_error("not a ringmpc-qp dump");
  }
  auto expect = [&](const char* name) {
    std::string t;
    if (!(is >> t) || t != name) throw std::runtime_error(std::string("expected block ") + name);
  };
  auto readVec = [&](VectorXd& v) {
    v.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!(is >> v(i))) throw std::runtime_error("truncated QP dump");
    }
  };
  QpProblem p;
  expect("H");
  p.H.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(is >> p.H(i, j))) throw std::runtime_error("truncated QP dump");
    }
  }
  VectorXd u;
  expect("f");
  readVec(p.f);
  expect("lower");
  readVec(p.lower);
  expect("upper");
  readVec(p.upper);
  expect("u");
  readVec(u);
  return {std::move(p), std::move(u)};
}

}  // namespace ringmpc
