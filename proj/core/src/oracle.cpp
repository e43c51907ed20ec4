#include "qrrp/oracle.hpp"
#include <cstdlib>
#include <cstdio>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "qrrp/gram.hpp"
#include "qrrp/kkt.hpp"

namespace qrrp {

void OracleConfig::validate() const {
  if (max_iter < 1)
    throw Error(ErrorCode::invalid_argument, "oracle: max_iter < 1");
  if (kkt_tol < 1e-12)
    throw Error(ErrorCode::invalid_argument, "oracle: kkt_tol below 1e-12");
  if (!(smoothing_decay > 0.0 && smoothing_decay < 1.0))
    throw Error(ErrorCode::invalid_argument, "oracle: decay must lie in (0,1)");
  if (!(smoothing_start > 0.0))
    throw Error(ErrorCode::invalid_argument, "oracle: smoothing_start <= 0");
}

namespace {

// Tilted Huber smoothing of the check loss: quadratic on (-delta, delta),
// matching slopes tau / tau-1 outside. Convex and C^1.
struct SmoothLoss {
  double tau, delta;
  double value(double r) const {
    if (r >= delta) return tau * (r - 0.5 * delta);
    if (r <= -delta) return (1.0 - tau) * (-r - 0.5 * delta);
    const double c = r >= 0.0 ? tau : 1.0 - tau;
    return 0.5 * c * r * r / delta;
  }
  double deriv(double r) const {
    if (r >= delta) return tau;
    if (r <= -delta) return tau - 1.0;
    const double c = r >= 0.0 ? tau : 1.0 - tau;
    return c * r / delta;
  }
  double second(double r) const {
    if (r >= delta || r <= -delta) return 0.0;
    return (r >= 0.0 ? tau : 1.0 - tau) / delta;
  }
};

double smoothed_objective(const Matrix& xtilde, const Vector& y,
                          const Vector& w, double lambda,
                          const SmoothLoss& loss, const Vector& coef) {
  const Vector r = y - xtilde * coef;
  double f = 0.0;
  for (Index i = 0; i < r.size(); ++i) f += w(i) * loss.value(r(i));
  return f + 0.5 * lambda * coef.tail(coef.size() - 1).squaredNorm();
}

// Damped Newton minimization of the smoothed objective at fixed delta.
void newton_stage(const Matrix& xtilde, const Vector& y, const Vector& w,
                  double lambda, const SmoothLoss& loss, int max_iter,
                  Vector& coef) {
  const Index d = xtilde.cols();
  const double gtol =
      1e-9 * std::max(1.0, w.sum()) * std::max(1.0, xtilde.cwiseAbs().maxCoeff());
  double mu = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector r = y - xtilde * coef;
    Vector grad = Vector::Zero(d);
    Matrix hess = Matrix::Zero(d, d);
    for (Index i = 0; i < r.size(); ++i) {
      const double g1 = w(i) * loss.deriv(r(i));
      if (g1 != 0.0) grad -= g1 * xtilde.row(i).transpose();
      const double g2 = w(i) * loss.second(r(i));
      if (g2 != 0.0)
        hess += g2 * (xtilde.row(i).transpose() * xtilde.row(i));
    }
    grad.tail(d - 1) += lambda * coef.tail(d - 1);
    hess.diagonal().tail(d - 1).array() += lambda;
    if (grad.cwiseAbs().maxCoeff() <= gtol) return;

    const double f0 = smoothed_objective(xtilde, y, w, lambda, loss, coef);
    bool moved = false;
    for (int attempt = 0; attempt < 30 && !moved; ++attempt) {
      Matrix damped = hess;
      damped.diagonal().array() += mu;
      Eigen::LDLT<Matrix> ldlt(damped);
      Vector step = ldlt.solve(-grad);
      // A singular Hessian block can make LDLT drop the inconsistent part of
      // the gradient, so insist on a genuine descent direction.
      if (ldlt.info() != Eigen::Success || !step.allFinite() ||
          !(grad.dot(step) < 0.0)) {
        mu = std::max(2.0 * mu, 1e-8);
        continue;
      }
      double t = 1.0;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        const Vector trial = coef + t * step;
        const double f1 = smoothed_objective(xtilde, y, w, lambda, loss, trial);
        if (f1 < f0 - 1e-4 * t * std::abs(grad.dot(step)) || f1 < f0) {
          coef = trial;
          moved = true;
          break;
        }
      }
      if (!moved) mu = std::max(4.0 * mu, 1e-8);
    }
    if (!moved) {
      if (std::getenv("QRRP_ORACLE_DEBUG"))
        std::fprintf(stderr, "[newton] stalled it=%d |g|=%.3e mu=%.3e\n", it,
                     grad.cwiseAbs().maxCoeff(), mu);
      return;  // stalled; the next smoothing stage or polish decides
    }
    mu *= 0.25;
  }
  if (std::getenv("QRRP_ORACLE_DEBUG"))
    std::fprintf(stderr, "[newton] max_iter delta=%.3e\n", loss.delta);
}

QuantileSolution polish_on_partition(const Dataset& data, const FitConfig& cfg,
                                     const Vector& w, const Matrix& xtilde,
                                     Partition part, const Vector& theta_raw) {
  const Index n = data.n();
  QuantileSolution sol;
  sol.theta = Vector::Zero(n);
  for (Index i : part.left) sol.theta(i) = w(i) * (cfg.tau - 1.0);
  for (Index i : part.right) sol.theta(i) = w(i) * cfg.tau;

  // Data in violation of general position (duplicated rows, say) can put
  // linearly dependent rows into the elbow. The dual is then set-valued:
  // keep a maximal independent subset in the working elbow and pin each
  // dependent case at its (boxed) dual from the smoothed solve.
  ElbowGramInverse gram;
  for (Index e : part.elbow) {
    try {
      gram.add_row(xtilde.row(e).transpose(), e);
    } catch (const Error&) {
      const double lo = w(e) * (cfg.tau - 1.0);
      const double hi = w(e) * cfg.tau;
      sol.theta(e) = std::clamp(theta_raw(e), lo, hi);
    }
  }
  if (gram.size() == 0)
    throw Error(ErrorCode::singular_elbow, "oracle polish: no usable elbow row");

  const ElbowSolve es = solve_elbow_system(xtilde, data.y, cfg.lambda,
                                           gram.elbow(), gram.inv(), sol.theta);
  for (std::size_t j = 0; j < gram.elbow().size(); ++j)
    sol.theta(gram.elbow()[j]) = es.theta_elbow(static_cast<Index>(j));
  sol.beta0 = es.lambda_beta0 / cfg.lambda;
  sol.beta = data.X.transpose() * sol.theta / cfg.lambda;
  sol.residuals =
      data.y - Vector::Constant(n, sol.beta0) - data.X * sol.beta;
  sol.partition = std::move(part);
  return sol;
}

}  // namespace qrrp::(anonymous)

double weighted_kkt_residual(const QuantileSolution& sol, const Dataset& data,
                             const FitConfig& cfg, const Vector& w) {
  const Index n = data.n();
  if (sol.theta.size() != n || w.size() != n)
    throw Error(ErrorCode::invalid_argument, "weighted_kkt: dimension mismatch");
  double viol = std::abs(sol.theta.sum());
  viol = std::max(viol,
                  (data.X.transpose() * sol.theta - cfg.lambda * sol.beta)
                      .cwiseAbs()
                      .maxCoeff());
  const Vector r =
      data.y - Vector::Constant(n, sol.beta0) - data.X * sol.beta;
  const double tol = kElbowTol * residual_scale(data.y);
  for (Index i = 0; i < n; ++i) {
    const double lo = w(i) * (cfg.tau - 1.0);
    const double hi = w(i) * cfg.tau;
    const double th = sol.theta(i);
    if (sol.partition.in_elbow(i)) {
      viol = std::max(viol, std::abs(r(i)));
      viol = std::max(viol, std::max(lo - th, th - hi));
    } else if (sol.partition.in_left(i)) {
      viol = std::max(viol, std::max(r(i), 0.0));
      viol = std::max(viol, std::abs(th - lo));
    } else {
      viol = std::max(viol, std::max(-r(i), 0.0));
      viol = std::max(viol, std::abs(th - hi));
    }
    if (r(i) < -tol && !sol.partition.in_left(i) && !sol.partition.in_elbow(i))
      viol = std::max(viol, std::abs(th - lo));
    if (r(i) > tol && !sol.partition.in_right(i) && !sol.partition.in_elbow(i))
      viol = std::max(viol, std::abs(th - hi));
  }
  return viol;
}

double objective_weighted(const Dataset& data, const FitConfig& cfg,
                          const Vector& w, double beta0, const Vector& beta) {
  const Vector r = data.y - Vector::Constant(data.n(), beta0) - data.X * beta;
  double loss = 0.0;
  for (Index i = 0; i < data.n(); ++i) loss += w(i) * check_loss(r(i), cfg.tau);
  return loss + 0.5 * cfg.lambda * beta.squaredNorm();
}

QuantileSolution oracle_solve_weighted(const Dataset& data,
                                       const FitConfig& cfg, const Vector& w,
                                       const OracleConfig& ocfg) {
  data.validate();
  cfg.validate();
  ocfg.validate();
  if (w.size() != data.n() || w.minCoeff() < 0.0 || w.maxCoeff() > 1.0)
    throw Error(ErrorCode::invalid_argument, "oracle: weights must lie in [0,1]^n");

  const Index n = data.n();
  const Index p = data.p();
  const Matrix xtilde = data.xtilde();
  const double scale = residual_scale(data.y);

  // Start from the zero-slope fit at a sample quantile of y.
  Vector coef = Vector::Zero(p + 1);
  {
    std::vector<double> ys(data.y.data(), data.y.data() + n);
    std::sort(ys.begin(), ys.end());
    const auto k = static_cast<std::size_t>(
        std::clamp<double>(std::ceil(cfg.tau * n) - 1.0, 0.0, double(n - 1)));
    coef(0) = ys[k];
  }

  double delta = ocfg.smoothing_start * scale;
  const double floor = 1e-10;
  while (true) {
    SmoothLoss loss{cfg.tau, delta};
    newton_stage(xtilde, data.y, w, cfg.lambda, loss, ocfg.max_iter, coef);
    if (delta <= floor) break;
    delta = std::max(delta * ocfg.smoothing_decay, floor);
  }

  // Detect the partition, then solve the exact KKT system on it. Iterate in
  // case a borderline case was classified on the wrong side.
  Vector resid = data.y - xtilde * coef;
  Vector theta_raw(n);
  {
    SmoothLoss loss{cfg.tau, floor};
    for (Index i = 0; i < n; ++i) theta_raw(i) = w(i) * loss.deriv(resid(i));
  }
  Partition part = partition_from_residuals(resid, kElbowTol, scale);
  const double target = ocfg.kkt_tol * scale;
  QuantileSolution best;
  double best_viol = std::numeric_limits<double>::infinity();
  Vector beta_guess = Vector::Zero(p);
  for (int attempt = 0; attempt < 30 + 4 * static_cast<int>(n); ++attempt) {
    // General position bounds |E| by p+1; drop the largest-|r| extras if the
    // detection window caught more.
    if (part.elbow.size() > static_cast<std::size_t>(p) + 1) {
      std::sort(part.elbow.begin(), part.elbow.end(), [&](Index a, Index b) {
        return std::abs(resid(a)) < std::abs(resid(b));
      });
      while (part.elbow.size() > static_cast<std::size_t>(p) + 1) {
        const Index i = part.elbow.back();
        part.elbow.pop_back();
        (resid(i) < 0.0 ? part.left : part.right).push_back(i);
      }
      part.sort_all();
    }
    if (part.elbow.empty()) {
      // Pick the case whose dual can absorb the pinned mass imbalance: it
      // enters from the right when the pinned sum is positive, from the left
      // when negative, by sliding beta0 to the nearest boundary case.
      double pinned = 0.0;
      for (Index i : part.left) pinned += w(i) * (cfg.tau - 1.0);
      for (Index i : part.right) pinned += w(i) * cfg.tau;
      const bool from_right = pinned > 0.0;
      const std::vector<Index>& side = from_right ? part.right : part.left;
      Index enter = -1;
      double best_q = from_right ? std::numeric_limits<double>::infinity()
                                 : -std::numeric_limits<double>::infinity();
      for (Index i : side) {
        const double q = data.y(i) - data.X.row(i).dot(beta_guess);
        if (from_right ? (q < best_q) : (q > best_q)) {
          best_q = q;
          enter = i;
        }
      }
      if (enter < 0) break;
      auto& from = from_right ? part.right : part.left;
      from.erase(std::find(from.begin(), from.end(), enter));
      part.elbow.push_back(enter);
      part.sort_all();
    }
    QuantileSolution sol;
    try {
      sol = polish_on_partition(data, cfg, w, xtilde, part, theta_raw);
    } catch (const Error&) {
      break;  // singular elbow; report the best smoothed certificate below
    }
    const double viol = weighted_kkt_residual(sol, data, cfg, w);
    if (std::getenv("QRRP_ORACLE_DEBUG")) {
      std::fprintf(stderr,
                   "[oracle] attempt=%d viol=%.3e |E|=%zu |L|=%zu |R|=%zu "
                   "b0=%.6f sum_th=%.2e\n",
                   attempt, viol, part.elbow.size(), part.left.size(),
                   part.right.size(), sol.beta0, sol.theta.sum());
      for (Index e : part.elbow)
        std::fprintf(stderr, "   elbow %ld theta=%.6f r=%.3e\n", long(e),
                     sol.theta(e), sol.residuals(e));
      for (Index i = 0; i < data.n(); ++i) {
        const char c = part.in_elbow(i) ? 'E' : part.in_left(i) ? 'L' : 'R';
        if ((c == 'L' && sol.residuals(i) > 1e-9) ||
            (c == 'R' && sol.residuals(i) < -1e-9))
          std::fprintf(stderr, "   wrong-side %ld claimed %c r=%.3e\n",
                       long(i), c, sol.residuals(i));
      }
    }
    if (viol < best_viol) {
      best = sol;
      best_viol = viol;
    }
    if (viol <= target) break;
    resid = sol.residuals;
    beta_guess = sol.beta;

    // Primal-dual active-set update, one exchange at a time (full exchanges
    // zigzag on degenerate instances). A pinned case whose exact residual
    // lands on the wrong side of zero belongs in the elbow; an elbow case
    // whose solved dual leaves its box belongs on the violated side.
    const double rtol = kElbowTol * scale;
    Index move = -1;
    int kind = 0;  // 1: left->elbow, 2: right->elbow, 3: elbow->left, 4: elbow->right
    double worst = 0.0;
    for (Index i : part.left)
      if (resid(i) > rtol && resid(i) / scale > worst) {
        worst = resid(i) / scale;
        move = i;
        kind = 1;
      }
    for (Index i : part.right)
      if (-resid(i) > rtol && -resid(i) / scale > worst) {
        worst = -resid(i) / scale;
        move = i;
        kind = 2;
      }
    for (Index e : part.elbow) {
      const double lo = w(e) * (cfg.tau - 1.0);
      const double hi = w(e) * cfg.tau;
      if (lo - sol.theta(e) > 1e-10 && lo - sol.theta(e) > worst) {
        worst = lo - sol.theta(e);
        move = e;
        kind = 3;
      }
      if (sol.theta(e) - hi > 1e-10 && sol.theta(e) - hi > worst) {
        worst = sol.theta(e) - hi;
        move = e;
        kind = 4;
      }
    }
    if (move < 0) break;
    auto take = [&](std::vector<Index>& from) {
      from.erase(std::find(from.begin(), from.end(), move));
    };
    switch (kind) {
      case 1: take(part.left); part.elbow.push_back(move); break;
      case 2: take(part.right); part.elbow.push_back(move); break;
      case 3: take(part.elbow); part.left.push_back(move); break;
      case 4: take(part.elbow); part.right.push_back(move); break;
    }
    part.sort_all();
  }
  if (!(best_viol <= target))
    throw Error(ErrorCode::oracle_failure,
                "oracle: certificate " + std::to_string(best_viol) +
                    " above target " + std::to_string(target));
  for (Index e : best.partition.elbow) best.residuals(e) = 0.0;
  return best;
}

QuantileSolution oracle_solve(const Dataset& data, const FitConfig& cfg,
                              double omega, std::optional<Index> istar,
                              const OracleConfig& ocfg) {
  if (!(omega >= 0.0 && omega <= 1.0))
    throw Error(ErrorCode::invalid_argument, "oracle: omega outside [0,1]");
  if (omega < 1.0 && !istar)
    throw Error(ErrorCode::invalid_argument, "oracle: istar required when omega < 1");
  Vector w = Vector::Ones(data.n());
  if (istar) {
    if (*istar < 0 || *istar >= data.n())
      throw Error(ErrorCode::invalid_argument, "oracle: istar out of range");
    w(*istar) = omega;
  }
  QuantileSolution sol = oracle_solve_weighted(data, cfg, w, ocfg);
  sol.omega = omega;
  sol.starred = istar;
  return sol;
}

double canonical_intercept(const Dataset& data, std::optional<Index> skip,
                           double tau, const Vector& beta) {
  std::vector<double> q;
  q.reserve(static_cast<std::size_t>(data.n()));
  for (Index i = 0; i < data.n(); ++i) {
    if (skip && i == *skip) continue;
    q.push_back(data.y(i) - data.X.row(i).dot(beta));
  }
  std::sort(q.begin(), q.end());
  // d/dbeta0 of the loss is -tau*m + (1-tau)*k between the k-th and (k+1)-th
  // order statistic (k points below, m above); the optimal set is where the
  // subdifferential contains zero.
  const double m = double(q.size());
  const double crit = tau * m;  // slope sign flips where k passes tau*m
  const auto k = static_cast<std::size_t>(std::floor(crit));
  if (std::abs(crit - std::round(crit)) < 1e-9 && k >= 1 && k < q.size()) {
    // Zero slope on a whole segment: the interval [q_(k), q_(k+1)].
    return 0.5 * (q[k - 1] + q[k]);
  }
  return q[std::min<std::size_t>(k, q.size() - 1)];
}

Vector brute_force_loo(const Dataset& data, double tau, double lambda,
                       const OracleConfig& ocfg, Index n_cap) {
  if (data.n() > n_cap)
    throw Error(ErrorCode::invalid_argument,
                "brute_force_loo: n exceeds the test-scale cap");
  FitConfig cfg{tau, lambda};
  Vector pred(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const QuantileSolution sol = oracle_solve(data, cfg, 0.0, i, ocfg);
    pred(i) = sol.beta0 + data.X.row(i).dot(sol.beta);
  }
  return pred;
}

}  // namespace qrrp
