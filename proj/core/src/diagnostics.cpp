#include "qrrp/diagnostics.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "qrrp/kkt.hpp"
#include "qrrp/lambda_path.hpp"
#include "qrrp/parallel.hpp"

namespace qrrp {

RidgeModel ridge_fit(const Dataset& data, double lambda) {
  data.validate();
  if (lambda < 0.0)
    throw Error(ErrorCode::invalid_argument, "ridge_fit: negative lambda");
  const Matrix xt = data.xtilde();
  Matrix d = xt.transpose() * xt;
  d.diagonal().tail(data.p()).array() += lambda;  // intercept unpenalized
  Eigen::LDLT<Matrix> ldlt(d);
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorCode::consistency, "ridge_fit: singular system");
  RidgeModel model;
  model.lambda = lambda;
  model.dinv = ldlt.solve(Matrix::Identity(d.rows(), d.cols()));
  model.hat = xt * model.dinv * xt.transpose();
  model.coef = model.dinv * (xt.transpose() * data.y);
  model.fitted = xt * model.coef;
  model.residuals = data.y - model.fitted;
  return model;
}

std::pair<double, Vector> ridge_weighted_fit(const Dataset& data,
                                             double lambda, Index istar,
                                             double omega) {
  if (istar < 0 || istar >= data.n())
    throw Error(ErrorCode::invalid_argument, "ridge_weighted_fit: bad istar");
  if (!(omega >= 0.0 && omega <= 1.0))
    throw Error(ErrorCode::invalid_argument, "ridge_weighted_fit: bad omega");
  const RidgeModel model = ridge_fit(data, lambda);
  Vector coef = model.coef;
  if (omega < 1.0) {
    Vector xstar(data.p() + 1);
    xstar(0) = 1.0;
    xstar.tail(data.p()) = data.X.row(istar);
    const double denom = 1.0 / (1.0 - omega) - model.leverage(istar);
    coef -= (model.dinv * xstar) * (model.residuals(istar) / denom);
  }
  return {coef(0), coef.tail(data.p())};
}

std::pair<double, Vector> ridge_weighted_fit_direct(const Dataset& data,
                                                    double lambda, Index istar,
                                                    double omega) {
  const Matrix xt = data.xtilde();
  Vector w = Vector::Ones(data.n());
  w(istar) = omega;
  Matrix d = xt.transpose() * w.asDiagonal() * xt;
  d.diagonal().tail(data.p()).array() += lambda;
  const Vector coef =
      Eigen::LDLT<Matrix>(d).solve(xt.transpose() * (w.asDiagonal() * data.y));
  return {coef(0), coef.tail(data.p())};
}

double RidgeInfluence::operator()(double omega) const {
  if (!(omega >= 0.0 && omega < 1.0))
    throw Error(ErrorCode::invalid_argument, "ridge influence: omega outside [0,1)");
  const double g = 1.0 / (1.0 - omega) - h_star;
  return r_star * r_star * sum_h2 / (denom * g * g);
}

RidgeInfluence influence_graph_ridge(const Dataset& data, double lambda,
                                     Index istar,
                                     std::optional<double> sigma2) {
  const RidgeModel model = ridge_fit(data, lambda);
  RidgeInfluence inf;
  inf.istar = istar;
  inf.r_star = model.residuals(istar);
  inf.h_star = model.leverage(istar);
  inf.sum_h2 = model.hat.col(istar).squaredNorm();
  inf.denom = sigma2 ? double(data.p()) * (*sigma2) : double(data.n());
  return inf;
}

double InfluenceGraph::eval(double omega) const {
  if (!(omega >= 0.0 && omega <= 1.0))
    throw Error(ErrorCode::invalid_argument, "influence eval: omega outside [0,1]");
  if (c0.empty()) return 0.0;
  std::size_t k = 0;
  while (k + 1 < c0.size() && omega < knots[k + 1]) ++k;
  const double dw = omega - knots[k];
  return c0[k] + c1[k] * dw + c2[k] * dw * dw;
}

InfluenceGraph influence_graph_qr(const OmegaPath& path, const Dataset& data,
                                  const FitConfig& cfg,
                                  std::optional<double> sigma2) {
  const Index n = data.n();
  const double denom = sigma2 ? double(data.p()) * (*sigma2) : double(n);

  InfluenceGraph g;
  g.istar = path.istar;
  g.knots.push_back(1.0);
  g.values.push_back(0.0);

  // Accumulated residual difference r_omega - r_1 per segment; rebasing at
  // each knot anchor absorbs the rare set-valued transients where beta0
  // snaps within the optimal interval.
  Vector base(n);
  const Vector& r_full = path.segments.front().anchor.residuals;
  for (const auto& seg : path.segments) {
    const Vector hk = seg.slope.h / cfg.lambda;
    base = seg.anchor.residuals - r_full;
    g.slope_table.push_back(hk);
    g.c0.push_back(base.squaredNorm() / denom);
    g.c1.push_back(2.0 * base.dot(hk) / denom);
    g.c2.push_back(hk.squaredNorm() / denom);
    const double dw = seg.omega_lo - seg.omega_hi;
    base += dw * hk;
    g.knots.push_back(seg.omega_lo);
    g.values.push_back(base.squaredNorm() / denom);
  }
  return g;
}

DfEstimate df_estimate(const Vector& y, const Vector& full_fitted,
                       const Vector& percase_fitted, double omega) {
  if (!(omega >= 0.0 && omega < 1.0))
    throw Error(ErrorCode::invalid_argument, "df_estimate: omega outside [0,1)");
  if (y.size() != full_fitted.size() || y.size() != percase_fitted.size())
    throw Error(ErrorCode::invalid_argument, "df_estimate: length mismatch");
  const double floor = 1e-12 * residual_scale(y);
  DfEstimate out;
  out.omega = omega;
  out.per_case = Vector::Zero(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double den = (1.0 - omega) * (y(i) - percase_fitted(i));
    if (std::abs(y(i) - percase_fitted(i)) < floor) {
      out.excluded.push_back(i);
      continue;
    }
    out.per_case(i) = (full_fitted(i) - percase_fitted(i)) / den;
    out.value += out.per_case(i);
  }
  return out;
}

DfEstimate qrrp_df(const Dataset& data, const FitConfig& cfg, double omega,
                   int threads) {
  const QuantileSolution full = full_fit_at(data, cfg.tau, cfg.lambda);
  const OmegaShared shared = make_omega_shared(data, cfg, full);
  const Vector full_fitted = full.fitted(data.y);
  Vector percase(data.n());
  parallel_for(static_cast<std::size_t>(data.n()), threads,
               [&](std::size_t i) {
                 const Index ii = static_cast<Index>(i);
                 const OmegaPath path =
                     build_omega_path(data, cfg, ii, full, shared);
                 const QuantileSolution sol = eval_at(path, omega);
                 percase(ii) = data.y(ii) - sol.residuals(ii);
               });
  return df_estimate(data.y, full_fitted, percase, omega);
}

DfEstimate ridge_df(const Dataset& data, double lambda, double omega) {
  const RidgeModel model = ridge_fit(data, lambda);
  Vector percase(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const double denom = 1.0 / (1.0 - omega) - model.leverage(i);
    percase(i) = model.fitted(i) - model.leverage(i) * model.residuals(i) / denom;
  }
  return df_estimate(data.y, model.fitted, percase, omega);
}

}  // namespace qrrp
