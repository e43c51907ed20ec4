#pragma once

#include "qrrp/omega_path.hpp"
#include "qrrp/types.hpp"

namespace qrrp {

/// Full-data ridge regression with unpenalized intercept, cached per
/// (data, lambda): H(lambda) = Xt (Xt'Xt + lambda Itilde)^{-1} Xt'.
struct RidgeModel {
  double lambda = 0.0;
  Matrix dinv;       // (Xt'Xt + lambda Itilde)^{-1}
  Matrix hat;        // n x n smoother matrix
  Vector coef;       // (beta0, beta)
  Vector fitted;     // H y
  Vector residuals;  // y - fitted

  double leverage(Index i) const { return hat(i, i); }
  double trace_hat() const { return hat.trace(); }
};

RidgeModel ridge_fit(const Dataset& data, double lambda);

/// Case-weight adjusted ridge fit, closed form via the hat-matrix identity.
/// Returns (beta0, beta).
std::pair<double, Vector> ridge_weighted_fit(const Dataset& data,
                                             double lambda, Index istar,
                                             double omega);

/// Same fit solved from the weighted normal equations; the two routes must
/// agree and tests hold them to 1e-10.
std::pair<double, Vector> ridge_weighted_fit_direct(const Dataset& data,
                                                    double lambda, Index istar,
                                                    double omega);

/// Closed-form case influence for ridge regression:
///   D(omega) = r*^2 sum_j h_{j*}^2 / (denom * (1/(1-omega) - h_**)^2).
/// denom = n by default (the rescaled variant); supplying sigma2 switches to
/// the classical p * sigma2 scaling.
struct RidgeInfluence {
  Index istar = 0;
  double r_star = 0.0;
  double h_star = 0.0;   // leverage h_{i*i*}
  double sum_h2 = 0.0;   // sum_j h_{j i*}^2
  double denom = 1.0;

  double operator()(double omega) const;
};

RidgeInfluence influence_graph_ridge(const Dataset& data, double lambda,
                                     Index istar,
                                     std::optional<double> sigma2 = std::nullopt);

/// Piecewise-quadratic case influence for penalized quantile regression,
/// accumulated from the residual slopes of the omega path (rescaled by 1/n;
/// supplying sigma2 switches to p * sigma2).
struct InfluenceGraph {
  Index istar = 0;
  std::vector<double> knots;   // omega breakpoints, 1 = w_0 > ... > 0
  std::vector<double> values;  // D at the knots
  // Per segment k (knots[k] >= omega >= knots[k+1]):
  //   D(omega) = c0[k] + c1[k]*(omega - knots[k]) + c2[k]*(omega - knots[k])^2
  std::vector<double> c0, c1, c2;
  std::vector<Vector> slope_table;  // residual slopes h_k / lambda

  double eval(double omega) const;
};

InfluenceGraph influence_graph_qr(const OmegaPath& path, const Dataset& data,
                                  const FitConfig& cfg,
                                  std::optional<double> sigma2 = std::nullopt);

struct DfEstimate {
  double omega = 0.0;
  double value = 0.0;
  Vector per_case;              // summands; excluded ones are zero
  std::vector<Index> excluded;  // cases with vanishing denominator
};

/// Case-weight based degrees-of-freedom estimate:
///   df_omega = sum_i (f(x_i) - f_omega^i(x_i)) / ((1-omega)(y_i - f_omega^i(x_i))).
/// Summands whose denominator falls below 1e-12 * scale are excluded and
/// reported.
DfEstimate df_estimate(const Vector& y, const Vector& full_fitted,
                       const Vector& percase_fitted, double omega);

DfEstimate qrrp_df(const Dataset& data, const FitConfig& cfg, double omega,
                   int threads = 1);
DfEstimate ridge_df(const Dataset& data, double lambda, double omega);

}  // namespace qrrp
