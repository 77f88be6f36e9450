#include "emitterforge/fitkit.hpp"

#include <cmath>
#include <limits>

#include "emitterforge/common.hpp"

namespace emitterforge::fitkit {

Vector FitOutcome::sigmas() const {
  if (covariance.size() == 0) return Vector::Zero(params.size());
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

bool Jacobian::ok() const {
  for (bool b : bad_column)
    if (b) return false;
  return true;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector or_fill(const Vector& v, Eigen::Index n, double fill) {
  return v.size() == 0 ? Vector::Constant(n, fill) : v;
}

Vector project(const Vector& p, const Vector& lo, const Vector& hi) { return p.cwiseMax(lo).cwiseMin(hi); }

bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace

Jacobian finite_difference_jacobian(const ResidualFn& residual, const Vector& params, double rel_step) {
  const auto n = params.size();
  return finite_difference_jacobian(residual, params, Vector::Constant(n, -kInf),
                                    Vector::Constant(n, kInf), rel_step);
}

Jacobian finite_difference_jacobian(const ResidualFn& residual, const Vector& params,
                                    const Vector& lower, const Vector& upper, double rel_step) {
  if (!(rel_step > 0.0 && rel_step <= 1e-2)) throw DomainError("rel_step must be in (0, 1e-2]");
  const auto n = params.size();
  Jacobian jac;
  jac.bad_column.assign(static_cast<std::size_t>(n), false);
  Vector r0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = std::max(rel_step * std::abs(params[j]), rel_step);
    Vector plus = params, minus = params;
    plus[j] += h;
    minus[j] -= h;
    Vector col;
    if (plus[j] <= upper[j] && minus[j] >= lower[j]) {
      col = (residual(plus) - residual(minus)) / (2.0 * h);
    } else {
      if (r0.size() == 0) r0 = residual(params);
      if (plus[j] <= upper[j]) {
        col = (residual(plus) - r0) / h;
      } else {
        col = (r0 - residual(minus)) / h;
      }
    }
    if (jac.values.size() == 0) jac.values = Matrix::Zero(col.size(), n);
    if (!finite(col)) {
      jac.bad_column[static_cast<std::size_t>(j)] = true;
      col = col.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
    }
    jac.values.col(j) = col;
  }
  return jac;
}

FitOutcome least_squares(const FitProblem& problem) {
  const auto n = problem.initial.size();
  const Vector lo = or_fill(problem.lower, n, -kInf);
  const Vector hi = or_fill(problem.upper, n, kInf);
  if (lo.size() != n || hi.size() != n) throw DomainError("bounds size mismatch");
  if ((lo.array() > hi.array()).any()) throw DomainError("inconsistent bounds");

  FitOutcome out;
  Vector p = project(problem.initial, lo, hi);
  Vector r = problem.residual(p);
  const auto m = r.size();
  if (m < n) throw DomainError("fewer residuals than parameters");
  out.residual_count = static_cast<int>(m);
  if (!finite(r)) {
    out.params = p;
    out.status = FitStatus::NonFinite;
    out.cost = kInf;
    return out;
  }
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  bool converged = false;
  FitStatus status = FitStatus::MaxIterations;

  auto projected_gradient = [&](const Vector& g, const Vector& x) {
    Vector pg = g;
    for (Eigen::Index j = 0; j < n; ++j) {
      if ((x[j] <= lo[j] && g[j] > 0.0) || (x[j] >= hi[j] && g[j] < 0.0)) pg[j] = 0.0;
    }
    return pg;
  };

  int it = 0;
  for (; it < problem.max_iterations && !converged; ++it) {
    const Jacobian jac = finite_difference_jacobian(problem.residual, p, lo, hi, problem.rel_step);
    const Matrix& J = jac.values;
    const Matrix jtj = J.transpose() * J;
    const Vector g = J.transpose() * r;  // half gradient of cost
    if (projected_gradient(g, p).norm() < problem.gradient_tolerance) {
      converged = true;
      status = FitStatus::Converged;
      break;
    }

    // Parameters held at a bound by the gradient are frozen for this step.
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < n; ++j)
      active[static_cast<std::size_t>(j)] = (p[j] <= lo[j] && g[j] > 0.0) || (p[j] >= hi[j] && g[j] < 0.0);

    bool accepted = false;
    while (!accepted) {
      Matrix a = jtj;
      Vector rhs = -g;
      a.diagonal().array() += lambda;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        a.row(j).setZero();
        a.col(j).setZero();
        a(j, j) = 1.0;
        rhs[j] = 0.0;
      }
      Eigen::LDLT<Matrix> ldlt(a);
      Vector step;
      if (ldlt.info() == Eigen::Success) step = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success || !finite(step)) {
        lambda *= 10.0;
        if (lambda > 1e16) {
          status = FitStatus::Singular;
          break;
        }
        continue;
      }
      const Vector trial = project(p + step, lo, hi);
      const Vector rt = problem.residual(trial);
      const double trial_cost = finite(rt) ? rt.squaredNorm() : kInf;
      if (trial_cost < cost) {
        const double rel_decrease = (cost - trial_cost) / std::max(cost, 1e-300);
        p = trial;
        r = rt;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (rel_decrease < problem.tolerance ||
            projected_gradient(J.transpose() * r, p).norm() < problem.gradient_tolerance) {
          converged = true;
          status = FitStatus::Converged;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) break;
      }
    }
    if (!accepted) {
      // No descent possible: at a (projected) stationary point within precision.
      if (status != FitStatus::Singular) {
        converged = true;
        status = FitStatus::Converged;
      }
      ++it;
      break;
    }
  }

  out.params = p;
  out.cost = cost;
  out.iterations = it;
  out.converged = converged;
  out.status = status;
  const auto dof = std::max<Eigen::Index>(m - n, 1);
  out.reduced_chi2 = cost / static_cast<double>(dof);

  const Jacobian jac = finite_difference_jacobian(problem.residual, p, lo, hi, problem.rel_step);
  const Matrix jtj = jac.values.transpose() * jac.values;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(jtj);
  out.covariance = cod.pseudoInverse() * out.reduced_chi2;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

}  // namespace emitterforge::fitkit
