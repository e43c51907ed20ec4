#include <doctest.h>

#include <algorithm>

#include "qrrp/kkt.hpp"
#include "qrrp/oracle.hpp"
#include "qrrp/simulate.hpp"

using namespace qrrp;

TEST_CASE("penalty-dominated limit recovers a sample quantile") {
  const Dataset d = simulate({12, 3, 41});
  const FitConfig cfg{0.3, 1e9};
  const QuantileSolution sol = oracle_solve(d, cfg, 1.0);
  CHECK(sol.beta.cwiseAbs().maxCoeff() <= 1e-6);

  std::vector<double> ys(d.y.data(), d.y.data() + d.n());
  std::sort(ys.begin(), ys.end());
  // 12 * 0.3 = 3.6, so the 0.3-quantile is the 4th order statistic.
  CHECK(sol.beta0 == doctest::Approx(ys[3]).epsilon(1e-6));
  CHECK(kkt_residual(sol, d, cfg) <= 1e-9 * residual_scale(d.y));
}

TEST_CASE("weight zero equals physical deletion") {
  for (std::uint64_t seed : {7u, 8u}) {
    const Dataset d = simulate({11, 2, seed});
    const FitConfig cfg{0.4, 0.8};
    const Index istar = 3;
    const QuantileSolution weighted = oracle_solve(d, cfg, 0.0, istar);
    const QuantileSolution removed = oracle_solve(d.without_case(istar), cfg, 1.0);
    CHECK(std::abs(weighted.beta0 - removed.beta0) <= 1e-8);
    CHECK((weighted.beta - removed.beta).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(weighted.theta(istar) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("oracle self-certifies across sizes, quantiles and weights") {
  int k = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Index n = 8 + Index(seed % 5) * 4;
    const Index p = 1 + Index(seed % 4) * 2;
    const double tau = std::vector<double>{0.1, 0.3, 0.5, 0.9}[seed % 4];
    const double lambda = std::vector<double>{0.05, 1.0, 20.0}[seed % 3];
    const Dataset d = simulate({n, p, 1000 + seed});
    const FitConfig cfg{tau, lambda};
    const double omega = std::vector<double>{1.0, 0.6, 0.25, 0.0}[(++k) % 4];
    const QuantileSolution sol =
        oracle_solve(d, cfg, omega, omega < 1.0 ? std::optional<Index>(Index(seed % n)) : std::nullopt);
    CHECK(kkt_residual(sol, d, cfg) <= 1e-9 * residual_scale(d.y));
  }
}

TEST_CASE("brute-force LOO on the equal-covariate fixture") {
  // With identical covariates the slope collapses, so every fit is the
  // weighted tau-quantile of the remaining responses. For tau = 0.3 and four
  // remaining cases the fit is the 2nd smallest (4 * 0.3 = 1.2).
  Dataset d;
  d.X = Matrix::Constant(5, 1, 2.0);
  d.y.resize(5);
  d.y << 5.0, 1.0, 4.0, 2.0, 3.0;
  const Vector pred = brute_force_loo(d, 0.3, 7.0);
  Vector want(5);
  want << 2.0, 3.0, 2.0, 3.0, 2.0;
  CHECK((pred - want).cwiseAbs().maxCoeff() <= 1e-7);

  SUBCASE("duplicated case predicts its own response") {
    Dataset dup;
    dup.X = Matrix::Constant(6, 1, 2.0);
    dup.y.resize(6);
    dup.y << 5.0, 1.0, 4.0, 2.0, 3.0, 3.0;
    // tau = 0.5: the quantile of the remaining 5 points is the 3rd order
    // statistic = 3, which equals the duplicate's own response.
    const Vector loo = brute_force_loo(dup, 0.5, 1.0);
    CHECK(loo(4) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(loo(5) == doctest::Approx(3.0).epsilon(1e-8));
  }

  SUBCASE("test-scale cap") {
    const Dataset big = simulate({210, 1, 5});
    CHECK_THROWS_AS(brute_force_loo(big, 0.5, 1.0), Error);
  }
}

TEST_CASE("oracle config validation") {
  OracleConfig bad;
  bad.kkt_tol = 1e-13;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = OracleConfig{};
  bad.smoothing_decay = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
