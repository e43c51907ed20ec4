#pragma once

#include "qrrp/types.hpp"

namespace qrrp {

/// Full-data (omega = 1) solution path in lambda. Between breakpoints the
/// partition is fixed and (lambda*beta0, theta_E) are affine in lambda, so
/// solutions anywhere on [lambda_min, infinity) come from linear
/// interpolation plus beta = X'theta / lambda.
struct LambdaPath {
  double tau = 0.5;
  double lambda_min = 1e-4;  // lower end of the built range

  // Stored states, lambda strictly decreasing. Entries [0, n_events) are
  // event breakpoints; one trailing entry pins the state at lambda_min when
  // the path was built past the last event.
  std::vector<double> lambdas;
  std::vector<double> lambda_beta0;  // lambda * beta0 at each stored state
  std::vector<Vector> thetas;
  std::vector<Partition> partitions;  // partitions[k] valid on [lambdas[k+1], lambdas[k]]
  Index n_events = 0;

  Partition top_partition;     // valid on [lambda_max, infinity)
  double top_lb0_slope = 0.0;  // d(lambda*beta0)/dlambda above lambda_max

  double lambda_max() const { return lambdas.front(); }
  double smallest_event() const;

  /// Solution at any lambda >= lambda_min (exact at breakpoints).
  QuantileSolution eval(const Dataset& data, double lambda) const;
};

/// Builds the path from lambda = infinity down to lambda_min. Every stored
/// breakpoint solution is KKT-certified to 1e-8 * residual_scale(y).
LambdaPath build_lambda_path(const Dataset& data, double tau,
                             double lambda_min);

/// One-off full-data fit; builds the path down to `lambda` internally.
QuantileSolution full_fit_at(const Dataset& data, double tau, double lambda);

/// n log-equispaced values spanning [max(smallest breakpoint, lambda_min),
/// lambda_max], descending.
Vector lambda_grid(const LambdaPath& path, int n_lambda);

/// n log-equispaced points on [lo, hi], ascending.
Vector log_space(double lo, double hi, int n);

}  // namespace qrrp
