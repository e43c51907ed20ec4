#include <doctest.h>

#include <cmath>

#include "qrrp/kkt.hpp"
#include "qrrp/lambda_path.hpp"
#include "qrrp/omega_path.hpp"
#include "qrrp/oracle.hpp"
#include "qrrp/simulate.hpp"

using namespace qrrp;

TEST_CASE("slope identities") {
  const Dataset d = simulate({15, 3, 9});
  const FitConfig cfg{0.4, 0.7};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const OmegaShared shared = make_omega_shared(d, cfg, full);

  for (Index istar = 0; istar < d.n(); ++istar) {
    if (full.partition.in_elbow(istar)) {
      CHECK_THROWS_AS(slopes(d, cfg, full.partition, istar, shared.gram), Error);
      continue;
    }
    const SlopeSet sl = slopes(d, cfg, full.partition, istar, shared.gram);
    const double s = cfg.tau - (full.partition.in_left(istar) ? 1.0 : 0.0);
    CHECK(std::abs(sl.b.sum() + s) <= 1e-10);  // dual mass balance
    for (Index e : full.partition.elbow) CHECK(sl.h(e) == 0.0);
    // The starred residual moves away from the elbow (Part II obligation).
    if (full.partition.in_right(istar)) CHECK(sl.h(istar) < 0.0);
    if (full.partition.in_left(istar)) CHECK(sl.h(istar) > 0.0);
  }
}

TEST_CASE("starred residual slope agrees with finite differences of the oracle") {
  const Dataset d = simulate({12, 3, 14});
  const FitConfig cfg{0.5, 1.3};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const OmegaShared shared = make_omega_shared(d, cfg, full);
  int checked = 0;
  for (Index istar = 0; istar < d.n() && checked < 4; ++istar) {
    if (full.partition.in_elbow(istar)) continue;
    const SlopeSet sl = slopes(d, cfg, full.partition, istar, shared.gram);
    const double dw = 1e-4;
    const QuantileSolution near = oracle_solve(d, cfg, 1.0 - dw, istar);
    const double fd =
        cfg.lambda * (near.residuals(istar) - full.residuals(istar)) / (-dw);
    CHECK(fd == doctest::Approx(sl.h(istar)).epsilon(1e-4));
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("next breakpoint arithmetic") {
  SUBCASE("single elbow candidate hits the upper dual bound") {
    SlopeSet sl;
    sl.b0 = 0.0;
    sl.b = Vector::Constant(1, -0.5);
    sl.elbow_order = {0};
    sl.h = Vector::Zero(2);
    sl.beta_slope = Vector::Zero(1);
    Partition part;
    part.elbow = {0};
    part.right = {1};
    Vector theta(2);
    theta << 0.3, 0.5;
    Vector lam_r(2);
    lam_r << 0.0, 2.0;
    const NextBreakpoint nb =
        next_breakpoint(1.0, 0.5, theta, lam_r, sl, part, 1);
    CHECK(nb.kind == NextBreakpoint::Kind::elbow_exit);
    CHECK(nb.case_index == 0);
    CHECK(nb.omega == doctest::Approx(0.6));
    CHECK(nb.boundary == doctest::Approx(0.5));
  }

  SUBCASE("slopes pointing away from every boundary terminate at zero") {
    SlopeSet sl;
    sl.b0 = 0.0;
    sl.b = Vector::Constant(1, 1e-3);  // toward tau-1, but too slow
    sl.elbow_order = {0};
    sl.h = Vector(3);
    sl.h << 0.0, 1.0, -1.0;  // pushes residuals outward on both sides
    sl.beta_slope = Vector::Zero(1);
    Partition part;
    part.elbow = {0};
    part.left = {1};
    part.right = {2};
    Vector theta(3);
    theta << 0.1, -0.5, 0.5;
    Vector lam_r(3);
    lam_r << 0.0, -1.0, 1.0;
    const NextBreakpoint nb =
        next_breakpoint(1.0, 0.5, theta, lam_r, sl, part, 2);
    CHECK(nb.kind == NextBreakpoint::Kind::terminal);
    CHECK(nb.omega == 0.0);
  }
}

TEST_CASE("first event matches an oracle sweep over omega") {
  const Dataset d = simulate({15, 3, 23});
  const FitConfig cfg{0.5, 0.5};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const Index istar = full.partition.in_elbow(2) ? 3 : 2;
  REQUIRE(!full.partition.in_elbow(istar));
  const OmegaPath path = build_omega_path(d, cfg, istar, full);
  REQUIRE(path.breakpoints.size() >= 2);
  const double w1 = path.breakpoints[1];
  if (w1 > 0.0 && path.n_events > 0) {
    // March the oracle down a fine omega grid; the partition must first
    // change inside the step bracketing the path's breakpoint.
    auto partition_sig = [&](double w) {
      const QuantileSolution sol = oracle_solve(d, cfg, w, istar);
      std::string sig;
      for (Index i = 0; i < d.n(); ++i)
        sig += sol.partition.in_elbow(i) ? 'e'
               : sol.partition.in_left(i) ? 'l' : 'r';
      return sig;
    };
    const std::string at_full = partition_sig(1.0);
    double changed_at = 0.0;
    for (double w = 1.0 - 1e-3; w > 0.0; w -= 1e-3) {
      if (partition_sig(w) != at_full) {
        changed_at = w;
        break;
      }
    }
    CHECK(std::abs(changed_at - w1) <= 2e-3);
  }
}

TEST_CASE("terminal solutions equal oracle case-deleted fits") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Index n = 9 + Index(seed) * 3;
    const Index p = 1 + Index(seed % 3) * 2;
    const double tau = std::vector<double>{0.3, 0.5, 0.7}[seed % 3];
    const double lambda = std::vector<double>{0.2, 1.0, 5.0}[seed % 3];
    const Dataset d = simulate({n, p, 300 + seed});
    const FitConfig cfg{tau, lambda};
    const QuantileSolution full = full_fit_at(d, tau, lambda);
    const OmegaShared shared = make_omega_shared(d, cfg, full);
    for (Index istar = 0; istar < n; istar += 3) {
      const OmegaPath path = build_omega_path(d, cfg, istar, full, shared);
      const QuantileSolution ref = oracle_solve(d, cfg, 0.0, istar);
      // The slope is unique; the intercept is compared through its canonical
      // representative since the deleted problem can leave it set-valued.
      CHECK((path.terminal.beta - ref.beta).cwiseAbs().maxCoeff() <= 1e-6);
      const double b0p = canonical_intercept(d, istar, tau, path.terminal.beta);
      const double b0r = canonical_intercept(d, istar, tau, ref.beta);
      CHECK(std::abs(b0p - b0r) <= 1e-6);
      const double obj_path =
          objective(d, cfg, 0.0, istar, path.terminal.beta0, path.terminal.beta);
      const double obj_ref =
          objective(d, cfg, 0.0, istar, ref.beta0, ref.beta);
      CHECK(obj_path <= obj_ref + 1e-8);
      CHECK(obj_ref <= obj_path + 1e-8);
    }
  }
}

TEST_CASE("a zero-dual elbow case leaves the path constant") {
  Dataset d;
  d.X.resize(3, 1);
  d.X << 0.0, 1.0, 2.0;
  d.y.resize(3);
  d.y << 0.0, 1.0, 2.0;
  const FitConfig cfg{0.5, 1e6};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  REQUIRE(full.partition.in_elbow(1));
  REQUIRE(std::abs(full.theta(1)) <= 1e-12);
  const OmegaPath path = build_omega_path(d, cfg, 1, full);
  CHECK(path.n_events == 0);
  CHECK(path.terminal.beta0 == doctest::Approx(full.beta0));
  CHECK((path.terminal.beta - full.beta).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("piecewise linearity and certificates along segments") {
  const Dataset d = simulate({14, 4, 55});
  const FitConfig cfg{0.3, 0.9};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const OmegaShared shared = make_omega_shared(d, cfg, full);
  const double scale = residual_scale(d.y);

  for (Index istar : {0, 5, 9}) {
    const OmegaPath path = build_omega_path(d, cfg, istar, full, shared);

    // Endpoints.
    const QuantileSolution at1 = eval_at(path, 1.0);
    CHECK(std::abs(at1.beta0 - full.beta0) <= 1e-10);
    const QuantileSolution at0 = eval_at(path, 0.0);
    CHECK(std::abs(at0.beta0 - path.terminal.beta0) <= 1e-12);

    for (const auto& seg : path.segments) {
      if (!(seg.omega_hi > seg.omega_lo)) continue;
      const QuantileSolution lo = eval_at(path, seg.omega_lo);
      const QuantileSolution hi = eval_at(path, seg.omega_hi);
      for (double a : {0.25, 0.5, 0.75}) {
        const double w = seg.omega_lo + a * (seg.omega_hi - seg.omega_lo);
        const QuantileSolution mid = eval_at(path, w);
        // Affine combination of the endpoint solutions, component-wise.
        CHECK(std::abs(mid.beta0 - (a * hi.beta0 + (1 - a) * lo.beta0)) <= 1e-10);
        CHECK((mid.beta - (a * hi.beta + (1 - a) * lo.beta)).cwiseAbs().maxCoeff() <=
              1e-10);
        CHECK((mid.theta - (a * hi.theta + (1 - a) * lo.theta)).cwiseAbs().maxCoeff() <=
              1e-10);
        CHECK(kkt_residual(mid, d, cfg) <= 1e-8 * scale);
      }
    }

    // Monotone breakpoints and the elbow size bound.
    for (std::size_t k = 0; k + 1 < path.breakpoints.size(); ++k)
      CHECK(path.breakpoints[k] > path.breakpoints[k + 1]);
    for (const auto& seg : path.segments)
      CHECK(Index(seg.partition.elbow.size()) <= std::min(d.p() + 1, d.n()));

    // The starred case never re-enters the elbow after leaving it.
    bool left_elbow = false;
    for (const auto& seg : path.segments) {
      if (!seg.partition.in_elbow(istar)) left_elbow = true;
      if (left_elbow) CHECK(!seg.partition.in_elbow(istar));
    }
  }
}

TEST_CASE("midpoint objective values agree with the oracle") {
  const Dataset d = simulate({10, 2, 91});
  const FitConfig cfg{0.5, 0.6};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const Index istar = 1;
  const OmegaPath path = build_omega_path(d, cfg, istar, full);
  for (const auto& seg : path.segments) {
    if (!(seg.omega_hi > seg.omega_lo + 1e-6)) continue;
    const double w = 0.5 * (seg.omega_hi + seg.omega_lo);
    const QuantileSolution mine = eval_at(path, w);
    const QuantileSolution ref = oracle_solve(d, cfg, w, istar);
    const double obj_mine = objective(d, cfg, w, istar, mine.beta0, mine.beta);
    const double obj_ref = objective(d, cfg, w, istar, ref.beta0, ref.beta);
    CHECK(obj_mine <= obj_ref + 1e-8);
    CHECK(obj_ref <= obj_mine + 1e-8);
  }
}

TEST_CASE("set updates leave residual signs consistent on the next segment") {
  const Dataset d = simulate({16, 3, 77});
  const FitConfig cfg{0.5, 0.4};
  const QuantileSolution full = full_fit_at(d, cfg.tau, cfg.lambda);
  const OmegaShared shared = make_omega_shared(d, cfg, full);
  for (Index istar : {0, 4, 8, 12}) {
    const OmegaPath path = build_omega_path(d, cfg, istar, full, shared);
    for (std::size_t k = 0; k + 1 < path.segments.size(); ++k) {
      const auto& prev = path.segments[k].partition;
      const auto& seg = path.segments[k + 1];
      if (!(seg.omega_hi > seg.omega_lo + 1e-9)) continue;
      const double w = seg.omega_hi - 0.25 * (seg.omega_hi - seg.omega_lo);
      const QuantileSolution sol = eval_at(path, w);
      for (Index i = 0; i < d.n(); ++i) {
        if (prev.in_elbow(i) && seg.partition.in_right(i))
          CHECK(sol.residuals(i) > 0.0);  // rule (a)
        if (prev.in_elbow(i) && seg.partition.in_left(i))
          CHECK(sol.residuals(i) < 0.0);  // rule (b)
        if (!prev.in_elbow(i) && seg.partition.in_elbow(i) && i != istar) {
          CHECK(sol.theta(i) > cfg.tau - 1.0);  // rule (c)
          CHECK(sol.theta(i) < cfg.tau);
        }
      }
    }
  }
}
