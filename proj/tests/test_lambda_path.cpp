#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qrrp/kkt.hpp"
#include "qrrp/lambda_path.hpp"
#include "qrrp/oracle.hpp"
#include "qrrp/simulate.hpp"

using namespace qrrp;

TEST_CASE("huge lambda collapses the slope onto a sample quantile") {
  const Dataset d = simulate({15, 4, 21});
  const double tau = 0.3;
  const QuantileSolution sol = full_fit_at(d, tau, 1e10);
  CHECK(sol.beta.cwiseAbs().maxCoeff() <= 1e-6);

  std::vector<double> ys(d.y.data(), d.y.data() + d.n());
  std::sort(ys.begin(), ys.end());
  // 15 * 0.3 = 4.5: the 5th order statistic.
  CHECK(sol.beta0 == doctest::Approx(ys[4]).epsilon(1e-6));
  // Residual signs split the remaining cases around the elbow point.
  CHECK(sol.partition.left.size() == 4);
  CHECK(sol.partition.right.size() == 10);
}

TEST_CASE("three-point median fixture") {
  Dataset d;
  d.X.resize(3, 1);
  d.X << 0.0, 1.0, 2.0;
  d.y.resize(3);
  d.y << 0.0, 1.0, 2.0;
  const QuantileSolution sol = full_fit_at(d, 0.5, 1e12);
  CHECK(sol.beta0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.partition.in_elbow(1));
}

TEST_CASE("full_fit_at matches the oracle") {
  const Dataset d = simulate({20, 5, 77});
  for (double tau : {0.25, 0.5}) {
    const QuantileSolution fit = full_fit_at(d, tau, 1.0);
    const QuantileSolution ref = oracle_solve(d, FitConfig{tau, 1.0}, 1.0);
    CHECK(std::abs(fit.beta0 - ref.beta0) <= 1e-6);
    CHECK((fit.beta - ref.beta).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("path interpolation is exact at breakpoints and valid between") {
  const Dataset d = simulate({30, 5, 5});
  const double tau = 0.5;
  const LambdaPath path = build_lambda_path(d, tau, 1e-3);
  REQUIRE(path.n_events >= 2);

  SUBCASE("stored breakpoints reproduce exactly") {
    for (Index k = 0; k < path.n_events; ++k) {
      const QuantileSolution sol = path.eval(d, path.lambdas[std::size_t(k)]);
      CHECK((sol.theta - path.thetas[std::size_t(k)]).cwiseAbs().maxCoeff() <=
            1e-14);
    }
  }

  SUBCASE("segment midpoints satisfy the KKT system") {
    const double scale = residual_scale(d.y);
    for (std::size_t k = 0; k + 1 < path.lambdas.size(); ++k) {
      const double mid = 0.5 * (path.lambdas[k] + path.lambdas[k + 1]);
      const QuantileSolution sol = path.eval(d, mid);
      CHECK(kkt_residual(sol, d, FitConfig{tau, mid}) <= 1e-8 * scale);
    }
  }

  SUBCASE("grid evaluations match the oracle") {
    const Vector grid = lambda_grid(path, 20);
    for (Index k = 0; k < grid.size(); ++k) {
      const QuantileSolution sol = path.eval(d, grid(k));
      const QuantileSolution ref = oracle_solve(d, FitConfig{tau, grid(k)}, 1.0);
      CHECK(std::abs(sol.beta0 - ref.beta0) <= 1e-6);
      CHECK((sol.beta - ref.beta).cwiseAbs().maxCoeff() <= 1e-6);
      // Elbow interpolation equations at the grid point.
      for (Index e : sol.partition.elbow)
        CHECK(std::abs(d.y(e) - sol.beta0 - d.X.row(e).dot(sol.beta)) <= 1e-8);
    }
  }

  SUBCASE("structural invariants") {
    for (std::size_t k = 0; k + 1 < path.lambdas.size(); ++k)
      CHECK(path.lambdas[k] > path.lambdas[k + 1]);
    for (const auto& part : path.partitions)
      CHECK(Index(part.elbow.size()) <= std::min(d.p() + 1, d.n()));
  }
}

TEST_CASE("integer n*tau start is handled") {
  const Dataset d = simulate({10, 2, 31});
  const LambdaPath path = build_lambda_path(d, 0.5, 1e-2);
  const double scale = residual_scale(d.y);
  for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
    const QuantileSolution sol = path.eval(d, path.lambdas[k]);
    CHECK(kkt_residual(sol, d, FitConfig{0.5, path.lambdas[k]}) <= 1e-8 * scale);
  }
}

TEST_CASE("log-spaced grids") {
  const Vector g5 = log_space(0.01, 100.0, 5);
  Vector want(5);
  want << 0.01, 0.1, 1.0, 10.0, 100.0;
  CHECK((g5 - want).cwiseAbs().maxCoeff() <= 1e-12);

  const Vector g2 = log_space(0.5, 8.0, 2);
  CHECK(g2(0) == 0.5);
  CHECK(g2(1) == 8.0);

  // Table-2 protocol: 50 points on [0.01, 100], constant ratio (1e4)^(1/49).
  const Vector g50 = log_space(0.01, 100.0, 50);
  const double want_ratio = std::pow(1e4, 1.0 / 49.0);
  for (Index i = 1; i < 50; ++i)
    CHECK(g50(i) / g50(i - 1) == doctest::Approx(want_ratio).epsilon(1e-10));
}
