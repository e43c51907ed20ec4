#pragma once

#include "qrrp/types.hpp"

namespace qrrp {

struct CvCurve {
  Vector lambdas;      // descending grid
  Vector rcv;          // exact LOO CV scores
  Vector gacv;         // NaN where |E_lambda| = n leaves it undefined
  Vector elbow_sizes;  // |E_lambda| of the full-data fit
  double argmin_rcv = 0.0;
  double argmin_gacv = 0.0;
  Index argmin_rcv_index = -1;
  Index argmin_gacv_index = -1;
  std::vector<std::string> warnings;
};

/// Exact leave-one-out CV over a lambda grid: one full-data lambda path, then
/// n omega paths per grid point. RCV(lambda) = (1/n) sum_i rho_tau of the
/// terminal (omega = 0) residual of case i; GACV(lambda) = sum_i rho_tau(r_i)
/// / (n - |E_lambda|) from the full-data fit.
CvCurve exact_loo_cv(const Dataset& data, double tau, const Vector& lambdas,
                     int threads = 1);

/// Per-case LOO residuals r_i^{[-i]} at one lambda, via omega paths.
Vector loo_residuals(const Dataset& data, double tau, double lambda,
                     int threads = 1);

enum class FlipScenario { a, b, c, d };

struct FlipRecord {
  Index case_index = -1;
  double r_full = 0.0;
  double r_loo = 0.0;
  FlipScenario scenario = FlipScenario::a;
  double approx_error = 0.0;  // GACV linearization error for this case
};

char flip_scenario_name(FlipScenario s);

/// Derivative of the smoothed check loss rho_{tau,delta}: the check-loss
/// slope outside (-delta, delta) and 2(tau 1(r>0) + (1-tau) 1(r<0)) r/delta
/// inside.
double smoothed_check_deriv(double r, double tau, double delta);

/// One record per flipped case (full-data and LOO residuals on different
/// sides of zero). delta <= 0 selects the default 1e-4 * max(1, ||y||_inf).
std::vector<FlipRecord> flip_analysis(const Dataset& data, double tau,
                                      double lambda, double delta = 0.0,
                                      int threads = 1);

}  // namespace qrrp
