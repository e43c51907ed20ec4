#pragma once

#include "qrrp/types.hpp"

namespace qrrp {

/// Splits cases by residual sign. A case lands in the elbow iff
/// |r_i| <= tol * scale; otherwise the sign decides left/right.
Partition partition_from_residuals(const Vector& residuals, double tol,
                                   double scale = 1.0);

/// Max-norm KKT violation of `sol` for the case-weight adjusted problem at
/// (tau, lambda, omega, istar). Aggregates |sum theta|, ||X'theta - lambda
/// beta||_inf, the per-case dual conditions given the residual signs, and the
/// elbow interpolation equations. Zero iff the KKT conditions hold exactly.
double kkt_residual(const QuantileSolution& sol, const Dataset& data,
                    const FitConfig& cfg);

/// Pinned dual value for a non-elbow case: (tau - 1) on the left of the
/// elbow, tau on the right, scaled by omega for the starred case.
double pinned_theta(double tau, bool in_left, bool is_starred, double omega);

struct ElbowSolve {
  double lambda_beta0 = 0.0;  // lambda * beta0
  Vector theta_elbow;         // dual on the elbow, in elbow_order
};

/// Solves the stationarity system on a fixed partition:
///   (Xt_E Xt_E') theta_E = lambda y_E - lambda beta0 1_E - Xt_E v,
///   1' theta = 0,
/// where v = sum over non-elbow cases of theta_i xtilde_i and the non-elbow
/// duals are pinned (already written into theta_pinned; elbow entries are
/// ignored). gram_inv is (Xt_E Xt_E')^{-1} with rows matching elbow_order.
ElbowSolve solve_elbow_system(const Matrix& xtilde, const Vector& y,
                              double lambda,
                              const std::vector<Index>& elbow_order,
                              const Matrix& gram_inv,
                              const Vector& theta_pinned);

/// Builds the full solution implied by a partition: pins the non-elbow duals,
/// solves the elbow system, and recovers beta = X'theta / lambda. Elbow
/// residuals are snapped to exact zero.
QuantileSolution solution_from_partition(const Dataset& data,
                                         const FitConfig& cfg, double omega,
                                         std::optional<Index> istar,
                                         const Partition& partition,
                                         const Matrix& xtilde,
                                         const std::vector<Index>& elbow_order,
                                         const Matrix& gram_inv);

}  // namespace qrrp
