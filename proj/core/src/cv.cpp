#include "qrrp/cv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qrrp/kkt.hpp"
#include "qrrp/lambda_path.hpp"
#include "qrrp/omega_path.hpp"
#include "qrrp/parallel.hpp"

namespace qrrp {

CvCurve exact_loo_cv(const Dataset& data, double tau, const Vector& lambdas,
                     int threads) {
  data.validate();
  const Index n = data.n();
  const Index m = lambdas.size();
  if (m < 1)
    throw Error(ErrorCode::invalid_argument, "exact_loo_cv: empty grid");
  for (Index k = 0; k < m; ++k) {
    if (!(lambdas(k) > 0.0))
      throw Error(ErrorCode::invalid_argument, "exact_loo_cv: lambda <= 0");
    if (k > 0 && !(lambdas(k) < lambdas(k - 1)))
      throw Error(ErrorCode::invalid_argument,
                  "exact_loo_cv: grid must be sorted descending");
  }

  const LambdaPath path = build_lambda_path(data, tau, lambdas(m - 1));

  CvCurve curve;
  curve.lambdas = lambdas;
  curve.rcv.setZero(m);
  curve.gacv.setZero(m);
  curve.elbow_sizes.setZero(m);

  struct PerLambda {
    FitConfig cfg;
    QuantileSolution full;
    OmegaShared shared;
  };
  std::vector<PerLambda> ctx(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) {
    auto& c = ctx[static_cast<std::size_t>(k)];
    c.cfg = FitConfig{tau, lambdas(k)};
    c.full = path.eval(data, lambdas(k));
    c.shared = make_omega_shared(data, c.cfg, c.full);
  }

  // Parallel over (lambda, case) pairs; each task writes one slot.
  Matrix loo_res(n, m);
  parallel_for(static_cast<std::size_t>(n * m), threads, [&](std::size_t t) {
    const Index k = static_cast<Index>(t) / n;
    const Index i = static_cast<Index>(t) % n;
    const auto& c = ctx[static_cast<std::size_t>(k)];
    const OmegaPath wp = build_omega_path(data, c.cfg, i, c.full, c.shared);
    loo_res(i, k) = wp.terminal.residuals(i);
  });

  for (Index k = 0; k < m; ++k) {
    const auto& c = ctx[static_cast<std::size_t>(k)];
    double rcv = 0.0;
    for (Index i = 0; i < n; ++i) rcv += check_loss(loo_res(i, k), tau);
    curve.rcv(k) = rcv / double(n);

    const Index esz = static_cast<Index>(c.full.partition.elbow.size());
    curve.elbow_sizes(k) = double(esz);
    if (esz == n) {
      curve.gacv(k) = std::numeric_limits<double>::quiet_NaN();
      curve.warnings.push_back("GACV undefined at lambda=" +
                               std::to_string(lambdas(k)) +
                               ": elbow holds every case");
    } else {
      double full_loss = 0.0;
      for (Index i = 0; i < n; ++i)
        full_loss += check_loss(c.full.residuals(i), tau);
      curve.gacv(k) = full_loss / double(n - esz);
    }
  }

  curve.rcv.minCoeff(&curve.argmin_rcv_index);
  curve.argmin_rcv = curve.lambdas(curve.argmin_rcv_index);
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < m; ++k) {
    if (std::isnan(curve.gacv(k))) continue;
    if (curve.gacv(k) < best) {
      best = curve.gacv(k);
      curve.argmin_gacv_index = k;
    }
  }
  curve.argmin_gacv =
      curve.argmin_gacv_index >= 0 ? curve.lambdas(curve.argmin_gacv_index)
                                   : std::numeric_limits<double>::quiet_NaN();
  return curve;
}

Vector loo_residuals(const Dataset& data, double tau, double lambda,
                     int threads) {
  const FitConfig cfg{tau, lambda};
  const QuantileSolution full = full_fit_at(data, tau, lambda);
  const OmegaShared shared = make_omega_shared(data, cfg, full);
  Vector out(data.n());
  parallel_for(static_cast<std::size_t>(data.n()), threads,
               [&](std::size_t i) {
                 const OmegaPath wp = build_omega_path(
                     data, cfg, static_cast<Index>(i), full, shared);
                 out(static_cast<Index>(i)) =
                     wp.terminal.residuals(static_cast<Index>(i));
               });
  return out;
}

char flip_scenario_name(FlipScenario s) {
  switch (s) {
    case FlipScenario::a: return 'a';
    case FlipScenario::b: return 'b';
    case FlipScenario::c: return 'c';
    case FlipScenario::d: return 'd';
  }
  return '?';
}

double smoothed_check_deriv(double r, double tau, double delta) {
  if (r >= delta) return tau;
  if (r <= -delta) return tau - 1.0;
  return 2.0 * (r > 0.0 ? tau : 1.0 - tau) * r / delta;
}

std::vector<FlipRecord> flip_analysis(const Dataset& data, double tau,
                                      double lambda, double delta,
                                      int threads) {
  if (delta <= 0.0) delta = 1e-4 * residual_scale(data.y);
  const QuantileSolution full = full_fit_at(data, tau, lambda);
  const Vector r_loo = loo_residuals(data, tau, lambda, threads);

  std::vector<FlipRecord> records;
  for (Index i = 0; i < data.n(); ++i) {
    const double rf = full.residuals(i);
    const double rl = r_loo(i);
    // Flipped: the LOO residual sits strictly on the other side of zero
    // (elbow cases, rf = 0, flip whenever the LOO residual is nonzero).
    FlipRecord rec;
    if (rl > 0.0 && rf <= 0.0)
      rec.scenario = rf <= -delta ? FlipScenario::a : FlipScenario::b;
    else if (rl < 0.0 && rf >= 0.0)
      rec.scenario = rf >= delta ? FlipScenario::c : FlipScenario::d;
    else
      continue;
    rec.case_index = i;
    rec.r_full = rf;
    rec.r_loo = rl;
    const double true_diff = check_loss(rl, tau) - check_loss(rf, tau);
    rec.approx_error =
        smoothed_check_deriv(rf, tau, delta) * (rl - rf) - true_diff;
    records.push_back(rec);
  }
  return records;
}

}  // namespace qrrp
