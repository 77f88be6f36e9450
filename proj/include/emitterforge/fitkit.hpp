#pragma once

// Bounded weighted nonlinear least squares (Levenberg-Marquardt with
// projection onto box bounds) and finite-difference Jacobians.

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace emitterforge::fitkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Maps parameters to already-weighted residuals (model - data) / sigma.
using ResidualFn = std::function<Vector(const Vector&)>;

struct FitProblem {
  ResidualFn residual;
  Vector initial;
  Vector lower;  // empty = unbounded; use +-infinity per component otherwise
  Vector upper;
  int max_iterations = 200;
  double tolerance = 1e-10;
  double gradient_tolerance = 1e-10;
  double rel_step = 1e-6;
};

enum class FitStatus { Converged, MaxIterations, Singular, NonFinite };

struct FitOutcome {
  Vector params;
  Matrix covariance;   // (J^T J)^-1 * reduced_chi2
  double cost = 0.0;   // sum of squared residuals
  double reduced_chi2 = 0.0;
  bool converged = false;
  FitStatus status = FitStatus::MaxIterations;
  int iterations = 0;
  int residual_count = 0;

  Vector sigmas() const;
};

struct Jacobian {
  Matrix values;
  std::vector<bool> bad_column;  // non-finite residual at a probe point
  bool ok() const;
};

/// Central differences with per-parameter step max(rel_step |p|, rel_step).
Jacobian finite_difference_jacobian(const ResidualFn& residual, const Vector& params,
                                    double rel_step = 1e-6);

/// As above, but a probe that would leave [lower, upper] is replaced by a
/// one-sided difference on the feasible side.
Jacobian finite_difference_jacobian(const ResidualFn& residual, const Vector& params,
                                    const Vector& lower, const Vector& upper, double rel_step);

FitOutcome least_squares(const FitProblem& problem);

}  // namespace emitterforge::fitkit
