#include "qrrp/kkt.hpp"

#include <algorithm>
#include <cmath>

namespace qrrp {

Partition partition_from_residuals(const Vector& residuals, double tol,
                                   double scale) {
  if (tol < 0.0)
    throw Error(ErrorCode::invalid_argument, "partition_from_residuals: tol < 0");
  Partition part;
  const double cut = tol * scale;
  for (Index i = 0; i < residuals.size(); ++i) {
    const double r = residuals(i);
    if (std::abs(r) <= cut)
      part.elbow.push_back(i);
    else if (r < 0.0)
      part.left.push_back(i);
    else
      part.right.push_back(i);
  }
  return part;
}

double pinned_theta(double tau, bool in_left, bool is_starred, double omega) {
  const double base = in_left ? tau - 1.0 : tau;
  return is_starred ? omega * base : base;
}

namespace {

double interval_distance(double x, double lo, double hi) {
  if (x < lo) return lo - x;
  if (x > hi) return hi - x;
  return 0.0;
}

}  // namespace

double kkt_residual(const QuantileSolution& sol, const Dataset& data,
                    const FitConfig& cfg) {
  const Index n = data.n();
  const Index p = data.p();
  if (sol.beta.size() != p || sol.theta.size() != n)
    throw Error(ErrorCode::invalid_argument, "kkt_residual: dimension mismatch");
  sol.partition.validate(n);

  const double tau = cfg.tau;
  const double omega = sol.omega;
  const Index istar = sol.starred.value_or(-1);
  const double tol = kElbowTol * residual_scale(data.y);

  // Stationarity and dual mass balance.
  double viol = std::abs(sol.theta.sum());
  viol = std::max(viol,
                  (data.X.transpose() * sol.theta - cfg.lambda * sol.beta)
                      .cwiseAbs()
                      .maxCoeff());

  // Residuals recomputed from the primal variables; the stored ones are not
  // trusted by the certificate.
  const Vector r =
      data.y - Vector::Constant(n, sol.beta0) - data.X * sol.beta;

  for (Index i = 0; i < n; ++i) {
    const double w = (i == istar) ? omega : 1.0;
    const double lo = w * (tau - 1.0);
    const double hi = w * tau;
    const double th = sol.theta(i);
    if (sol.partition.in_elbow(i)) {
      viol = std::max(viol, std::abs(r(i)));
      viol = std::max(viol, interval_distance(th, lo, hi));
    } else if (sol.partition.in_left(i)) {
      viol = std::max(viol, std::max(r(i), 0.0));
      viol = std::max(viol, std::abs(th - lo));
    } else {
      viol = std::max(viol, std::max(-r(i), 0.0));
      viol = std::max(viol, std::abs(th - hi));
    }
    // Sign conditions judged from the recomputed residual too, so a solution
    // whose claimed partition disagrees with its own residuals is flagged.
    if (r(i) < -tol && !sol.partition.in_left(i) && !sol.partition.in_elbow(i))
      viol = std::max(viol, std::abs(th - lo));
    if (r(i) > tol && !sol.partition.in_right(i) && !sol.partition.in_elbow(i))
      viol = std::max(viol, std::abs(th - hi));
  }
  return viol;
}

ElbowSolve solve_elbow_system(const Matrix& xtilde, const Vector& y,
                              double lambda,
                              const std::vector<Index>& elbow_order,
                              const Matrix& gram_inv,
                              const Vector& theta_pinned) {
  const Index k = static_cast<Index>(elbow_order.size());
  if (gram_inv.rows() != k || gram_inv.cols() != k)
    throw Error(ErrorCode::invalid_argument, "solve_elbow_system: gram size mismatch");
  if (k == 0)
    throw Error(ErrorCode::invalid_argument, "solve_elbow_system: empty elbow");

  Vector theta0 = theta_pinned;
  for (Index e : elbow_order) theta0(e) = 0.0;
  const Vector v = xtilde.transpose() * theta0;  // p+1
  const double s_out = theta0.sum();

  Vector rhs(k);
  for (Index j = 0; j < k; ++j)
    rhs(j) = lambda * y(elbow_order[static_cast<std::size_t>(j)]) -
             xtilde.row(elbow_order[static_cast<std::size_t>(j)]).dot(v);

  const Vector t1 = gram_inv * rhs;
  const Vector u = gram_inv.rowwise().sum();  // gram_inv * 1
  const double denom = u.sum();
  if (!(std::abs(denom) > 0.0))
    throw Error(ErrorCode::singular_elbow, "solve_elbow_system: 1'G^{-1}1 vanishes");

  ElbowSolve out;
  out.lambda_beta0 = (t1.sum() + s_out) / denom;
  out.theta_elbow = t1 - out.lambda_beta0 * u;

  // t1 and lambda_beta0*u both scale with lambda while theta is O(1), so the
  // subtraction can lose the dual mass balance at large lambda. Shifting
  // along u trades lambda*beta0 for elbow dual one-for-one and restores the
  // sum exactly without disturbing the elbow equations.
  const double defect = -s_out - out.theta_elbow.sum();
  const double alpha = defect / denom;
  out.theta_elbow += alpha * u;
  out.lambda_beta0 -= alpha;
  return out;
}

QuantileSolution solution_from_partition(const Dataset& data,
                                         const FitConfig& cfg, double omega,
                                         std::optional<Index> istar,
                                         const Partition& partition,
                                         const Matrix& xtilde,
                                         const std::vector<Index>& elbow_order,
                                         const Matrix& gram_inv) {
  const Index n = data.n();
  QuantileSolution sol;
  sol.omega = omega;
  sol.starred = istar;
  sol.partition = partition;
  sol.theta = Vector::Zero(n);

  const Index star = istar.value_or(-1);
  for (Index i : partition.left)
    sol.theta(i) = pinned_theta(cfg.tau, true, i == star, omega);
  for (Index i : partition.right)
    sol.theta(i) = pinned_theta(cfg.tau, false, i == star, omega);

  const ElbowSolve es = solve_elbow_system(xtilde, data.y, cfg.lambda,
                                           elbow_order, gram_inv, sol.theta);
  for (std::size_t j = 0; j < elbow_order.size(); ++j)
    sol.theta(elbow_order[j]) = es.theta_elbow(static_cast<Index>(j));

  sol.beta0 = es.lambda_beta0 / cfg.lambda;
  sol.beta = data.X.transpose() * sol.theta / cfg.lambda;
  sol.residuals = data.y - Vector::Constant(n, sol.beta0) - data.X * sol.beta;
  for (Index e : elbow_order) sol.residuals(e) = 0.0;
  return sol;
}

}  // namespace qrrp
