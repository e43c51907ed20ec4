#pragma once

#include "qrrp/types.hpp"

namespace qrrp {

struct OracleConfig {
  int max_iter = 100;             // Newton iterations per smoothing stage
  double kkt_tol = 1e-9;          // target certificate, times residual scale
  double smoothing_start = 1e-1;  // initial delta, times residual scale
  double smoothing_decay = 0.2;   // geometric decay of delta, in (0,1)

  void validate() const;
};

/// Reference solver for the case-weight adjusted problem: smoothing
/// continuation on a C^1 approximation of the check loss, followed by an
/// exact solve of the KKT system on the detected partition. Self-certifying:
/// the returned solution passes kkt_residual <= kkt_tol * residual_scale(y),
/// otherwise an oracle_failure error is thrown. Never used on the hot path.
QuantileSolution oracle_solve(const Dataset& data, const FitConfig& cfg,
                              double omega,
                              std::optional<Index> istar = std::nullopt,
                              const OracleConfig& ocfg = {});

/// Same solver with arbitrary per-case loss weights in [0,1]; the dual box
/// for case i is [w_i(tau-1), w_i tau]. Used for leave-part-out checks.
QuantileSolution oracle_solve_weighted(const Dataset& data,
                                       const FitConfig& cfg,
                                       const Vector& weights,
                                       const OracleConfig& ocfg = {});

/// Max-norm KKT violation under per-case weights (zero iff exact).
double weighted_kkt_residual(const QuantileSolution& sol, const Dataset& data,
                             const FitConfig& cfg, const Vector& weights);

/// Weighted objective sum_i w_i rho_tau(r_i) + (lambda/2)||beta||^2.
double objective_weighted(const Dataset& data, const FitConfig& cfg,
                          const Vector& weights, double beta0,
                          const Vector& beta);

/// n case-deleted fits via oracle_solve; returns the LOO predictions
/// f^{[-i]}(x_i). Guarded by a test-scale cap on n.
Vector brute_force_loo(const Dataset& data, double tau, double lambda,
                       const OracleConfig& ocfg = {}, Index n_cap = 200);

/// With the slope fixed at beta, the optimal intercept of the (possibly
/// case-deleted) check-loss problem is an interval between order statistics
/// of q_i = y_i - x_i'beta; it degenerates to a point except when the dual
/// is degenerate ((n-1)*tau integral, say). Returns the interval midpoint, a
/// canonical representative for comparing two optimal solutions.
double canonical_intercept(const Dataset& data, std::optional<Index> skip,
                           double tau, const Vector& beta);

}  // namespace qrrp
