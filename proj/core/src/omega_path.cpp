#include "qrrp/omega_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qrrp/kkt.hpp"
#include "qrrp/oracle.hpp"

namespace qrrp {

namespace {

constexpr double kCertTol = 1e-8;

struct WState {
  double omega = 1.0;
  double lb0 = 0.0;  // lambda * beta0
  Vector lbeta;      // lambda * beta
  Vector theta;
  Vector lam_r;  // lambda * residuals
  Partition part;
  ElbowGramInverse gram;
  Index last_moved = -1;
};

QuantileSolution state_solution(const WState& st, const Dataset&,
                                const FitConfig& cfg, Index istar) {
  QuantileSolution sol;
  sol.omega = st.omega;
  sol.starred = istar;
  sol.beta0 = st.lb0 / cfg.lambda;
  sol.beta = st.lbeta / cfg.lambda;
  sol.theta = st.theta;
  sol.residuals = st.lam_r / cfg.lambda;
  sol.partition = st.part;
  return sol;
}

void move_between(std::vector<Index>& from, std::vector<Index>& to, Index i) {
  from.erase(std::find(from.begin(), from.end(), i));
  to.insert(std::lower_bound(to.begin(), to.end(), i), i);
}

// Exact re-solve of the KKT system on the current partition at fixed omega.
void resync_state(WState& st, const Dataset& data, const FitConfig& cfg,
                  Index istar, const Matrix& xtilde) {
  st.gram.refresh();
  const QuantileSolution sol =
      solution_from_partition(data, cfg, st.omega, istar, st.part, xtilde,
                              st.gram.elbow(), st.gram.inv());
  st.theta = sol.theta;
  st.lb0 = cfg.lambda * sol.beta0;
  st.lbeta = cfg.lambda * sol.beta;
  st.lam_r = cfg.lambda * sol.residuals;
}

void adopt_oracle(WState& st, const Dataset& data, const FitConfig& cfg,
                  Index istar, const Matrix& xtilde) {
  QuantileSolution sol = oracle_solve(data, cfg, st.omega, istar);
  sol.partition.sort_all();
  st.theta = sol.theta;
  st.lb0 = cfg.lambda * sol.beta0;
  st.lbeta = cfg.lambda * sol.beta;
  st.lam_r = cfg.lambda * sol.residuals;
  st.part = sol.partition;
  st.gram = ElbowGramInverse::from_design(xtilde, st.part.elbow);
  st.last_moved = -1;
}

// Empty elbow transient: beta0 is set-valued at this omega; slide it to the
// endpoint whose boundary case can absorb the dual flow, moving that case
// into the elbow. theta and beta are unchanged.
void empty_elbow_snap(WState& st, const Dataset& data, const FitConfig& cfg,
                      Index istar, const Matrix& xtilde) {
  const bool star_left = st.part.in_left(istar);
  const std::vector<Index>& side = star_left ? st.part.right : st.part.left;
  if (side.empty())
    throw Error(ErrorCode::consistency,
                "omega path: empty elbow with no case available to enter");

  Index enter = -1;
  double best_q = star_left ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
  for (Index i : side) {
    const double q = data.y(i) - data.X.row(i).dot(st.lbeta) / cfg.lambda;
    if (star_left ? (q < best_q) : (q > best_q)) {
      best_q = q;
      enter = i;
    }
  }
  const double new_lb0 = cfg.lambda * best_q;
  st.lam_r.array() += st.lb0 - new_lb0;
  st.lb0 = new_lb0;
  st.lam_r(enter) = 0.0;
  move_between(star_left ? st.part.right : st.part.left, st.part.elbow, enter);
  st.gram = ElbowGramInverse::from_design(xtilde, {enter});
  st.last_moved = enter;
}

}  // namespace

SlopeSet slopes(const Dataset& data, const FitConfig& cfg,
                const Partition& partition, Index istar,
                const ElbowGramInverse& gram) {
  if (partition.in_elbow(istar))
    throw Error(ErrorCode::invalid_argument,
                "slopes: starred case in the elbow (handled separately)");
  if (gram.size() == 0)
    throw Error(ErrorCode::invalid_argument, "slopes: empty elbow");

  const double s = cfg.tau - (partition.in_left(istar) ? 1.0 : 0.0);
  const Index k = gram.size();
  const Index p = data.p();

  Vector xstar(p + 1);
  xstar(0) = 1.0;
  xstar.tail(p) = data.X.row(istar);

  const Vector u = gram.inv().rowwise().sum();      // G^{-1} 1
  const Vector w = gram.inv() * (gram.rows() * xstar);  // G^{-1} Xt_E xstar

  SlopeSet out;
  out.elbow_order = gram.elbow();
  out.b0 = (1.0 - w.sum()) / u.sum() * s;
  out.b = -(out.b0 * u + s * w);

  Vector g_full = gram.rows().transpose() * out.b + s * xstar;  // p+1
  g_full(0) = 0.0;  // dual mass balance: 1'b + s = 0 exactly
  out.h = Vector::Constant(data.n(), -out.b0) -
          (data.X * g_full.tail(p));
  for (Index j = 0; j < k; ++j)
    out.h(out.elbow_order[static_cast<std::size_t>(j)]) = 0.0;
  out.beta_slope = g_full.tail(p);
  return out;
}

NextBreakpoint next_breakpoint(double omega_m, double tau,
                               const Vector& theta, const Vector& lam_r,
                               const SlopeSet& slope,
                               const Partition& partition, Index istar,
                               Index last_moved,
                               const std::vector<char>* parked) {
  NextBreakpoint best;
  best.omega = 0.0;
  best.kind = NextBreakpoint::Kind::terminal;

  struct Cand {
    double omega;
    bool entry;
    Index case_index;
    double boundary;
  };
  std::vector<Cand> cands;

  for (std::size_t j = 0; j < slope.elbow_order.size(); ++j) {
    const Index c = slope.elbow_order[j];
    const double bj = slope.b(static_cast<Index>(j));
    if (bj == 0.0) continue;
    const double target = bj < 0.0 ? tau : tau - 1.0;
    double raw = target - theta(c);
    if (std::abs(raw) <= kThetaTol) raw = 0.0;
    const double step = raw / bj;
    if (step > 0.0 || step < -omega_m) continue;
    if (step == 0.0 && c == last_moved) continue;
    cands.push_back({omega_m + step, false, c, target});
  }
  auto scan_side = [&](const std::vector<Index>& side, bool is_left) {
    for (Index i : side) {
      if (i == istar) continue;  // never re-enters the elbow
      if (parked && (*parked)[static_cast<std::size_t>(i)]) continue;
      const double hi = slope.h(i);
      if (hi == 0.0) continue;
      const double step = -lam_r(i) / hi;
      if (step >= 0.0) {
        // A case parked exactly at zero residual enters only if the slope
        // would push it across to the wrong side (degenerate ride-alongs,
        // e.g. duplicated rows).
        const bool wrong_side = is_left ? hi < 0.0 : hi > 0.0;
        if (!(step == 0.0 && wrong_side && i != last_moved)) continue;
      }
      if (step < -omega_m) continue;
      cands.push_back({omega_m + std::min(step, 0.0), true, i, 0.0});
    }
  };
  scan_side(partition.left, true);
  scan_side(partition.right, false);

  if (cands.empty()) return best;

  double top = -1.0;
  for (const auto& c : cands) top = std::max(top, c.omega);
  // Simultaneous events within relative 1e-12: entries first, then the
  // smallest case index, so paths are reproducible.
  const Cand* pick = nullptr;
  for (const auto& c : cands) {
    if (c.omega < top - 1e-12 * std::max(1.0, top)) continue;
    if (!pick || (c.entry && !pick->entry) ||
        (c.entry == pick->entry && c.case_index < pick->case_index))
      pick = &c;
  }
  best.omega = std::max(pick->omega, 0.0);
  best.kind = pick->entry ? NextBreakpoint::Kind::elbow_entry
                          : NextBreakpoint::Kind::elbow_exit;
  best.case_index = pick->case_index;
  best.boundary = pick->boundary;
  return best;
}

OmegaShared make_omega_shared(const Dataset& data, const FitConfig& cfg,
                              const QuantileSolution& full) {
  data.validate();
  cfg.validate();
  if (kkt_residual(full, data, cfg) > kCertTol * residual_scale(data.y))
    throw Error(ErrorCode::invalid_argument,
                "omega path: full-data solution fails its KKT certificate");
  OmegaShared shared;
  shared.xtilde = data.xtilde();
  if (!full.partition.elbow.empty())
    shared.gram =
        ElbowGramInverse::from_design(shared.xtilde, full.partition.elbow);
  return shared;
}

OmegaPath build_omega_path(const Dataset& data, const FitConfig& cfg,
                           Index istar, const QuantileSolution& full) {
  return build_omega_path(data, cfg, istar, full,
                          make_omega_shared(data, cfg, full));
}

OmegaPath build_omega_path(const Dataset& data, const FitConfig& cfg,
                           Index istar, const QuantileSolution& full,
                           const OmegaShared& shared) {
  const Index n = data.n();
  const Index p = data.p();
  if (istar < 0 || istar >= n)
    throw Error(ErrorCode::invalid_argument, "omega path: istar out of range");
  const Matrix& xtilde = shared.xtilde;
  const double scale = residual_scale(data.y);
  const double cert_tol = kCertTol * scale;
  const Index cap = 50 * (n + p);

  OmegaPath path;
  path.istar = istar;
  path.tau = cfg.tau;
  path.lambda = cfg.lambda;
  path.breakpoints.push_back(1.0);

  WState st;
  st.omega = 1.0;
  st.theta = full.theta;
  st.lb0 = cfg.lambda * full.beta0;
  st.lbeta = cfg.lambda * full.beta;
  st.lam_r = cfg.lambda * full.residuals;
  st.part = full.partition;
  st.part.sort_all();
  for (Index e : st.part.elbow) st.lam_r(e) = 0.0;
  st.gram = shared.gram;

  auto certify_or_recover = [&](const char* where) {
    if (kkt_residual(state_solution(st, data, cfg, istar), data, cfg) <=
        cert_tol)
      return;
    resync_state(st, data, cfg, istar, xtilde);
    if (kkt_residual(state_solution(st, data, cfg, istar), data, cfg) <=
        cert_tol)
      return;
    adopt_oracle(st, data, cfg, istar, xtilde);
    if (kkt_residual(state_solution(st, data, cfg, istar), data, cfg) >
        cert_tol)
      throw Error(ErrorCode::consistency,
                  std::string("omega path: certificate failure (") + where +
                      ") at omega=" + std::to_string(st.omega));
  };

  double last_event_omega = 2.0;
  auto count_event = [&](double w) {
    if (w > 0.0 && w < 1.0 && w != last_event_omega) ++path.n_events;
    last_event_omega = w;
  };

  // ---- Starred case initially in the elbow (Part II): the solution is
  // constant down to w1 = theta_star / (tau - I(theta_star < 0)).
  if (st.part.in_elbow(istar)) {
    const double ths = st.theta(istar);
    const bool at_boundary = std::abs(ths - cfg.tau) <= kThetaTol ||
                             std::abs(ths - (cfg.tau - 1.0)) <= kThetaTol;
    if (at_boundary) {
      path.warnings.push_back(
          "starred dual exactly at a boundary at omega=1; case treated as " +
          std::string(ths > 0.0 ? "right" : "left"));
      move_between(st.part.elbow, ths > 0.0 ? st.part.right : st.part.left,
                   istar);
      if (st.gram.size() > 1)
        st.gram.remove_row(st.gram.position_of(istar));
      else
        empty_elbow_snap(st, data, cfg, istar, xtilde);
      st.last_moved = istar;
      certify_or_recover("boundary start");
    } else {
      const double w1 =
          ths / (cfg.tau - (ths < 0.0 ? 1.0 : 0.0));  // in [0, 1)
      OmegaSegment seg;
      seg.omega_hi = 1.0;
      seg.omega_lo = std::max(w1, 0.0);
      seg.partition = st.part;
      seg.star_in_elbow = true;
      seg.slope.b0 = 0.0;
      seg.slope.b = Vector::Zero(st.gram.size());
      seg.slope.elbow_order = st.gram.elbow();
      seg.slope.h = Vector::Zero(n);
      seg.slope.beta_slope = Vector::Zero(p);
      seg.anchor = state_solution(st, data, cfg, istar);
      seg.anchor.omega = 1.0;
      path.segments.push_back(std::move(seg));
      path.breakpoints.push_back(std::max(w1, 0.0));

      if (w1 <= 0.0) {
        // Zero dual influence: the full-data solution is the LOO solution.
        st.omega = 0.0;
        path.terminal = state_solution(st, data, cfg, istar);
        return path;
      }
      st.omega = w1;
      count_event(w1);
      move_between(st.part.elbow, ths > 0.0 ? st.part.right : st.part.left,
                   istar);
      if (st.gram.size() > 1)
        st.gram.remove_row(st.gram.position_of(istar));
      else
        empty_elbow_snap(st, data, cfg, istar, xtilde);
      st.last_moved = istar;
      certify_or_recover("part II exit");
    }
  }

  // ---- Main loop: piecewise linear evolution between set changes.
  int events_since_beta_sync = 0;
  std::vector<char> parked(static_cast<std::size_t>(n), 0);
  while (st.omega > 0.0) {
    if (st.part.elbow.empty()) {
      empty_elbow_snap(st, data, cfg, istar, xtilde);
      certify_or_recover("empty elbow snap");
      continue;
    }

    SlopeSet sl = slopes(data, cfg, st.part, istar, st.gram);
    const NextBreakpoint nb =
        next_breakpoint(st.omega, cfg.tau, st.theta, st.lam_r, sl, st.part,
                        istar, st.last_moved, &parked);

    const double w_next =
        nb.kind == NextBreakpoint::Kind::terminal ? 0.0 : nb.omega;
    const double dw = w_next - st.omega;

    OmegaSegment seg;
    seg.omega_hi = st.omega;
    seg.omega_lo = w_next;
    seg.partition = st.part;
    seg.anchor = state_solution(st, data, cfg, istar);
    seg.slope = sl;

    // Advance (lambda*beta0, theta_E) and (lambda*beta, lambda*r) linearly.
    for (std::size_t j = 0; j < sl.elbow_order.size(); ++j)
      st.theta(sl.elbow_order[j]) += sl.b(static_cast<Index>(j)) * dw;
    const double s = cfg.tau - (st.part.in_left(istar) ? 1.0 : 0.0);
    st.theta(istar) = w_next * s;
    st.lb0 += sl.b0 * dw;
    st.lbeta += sl.beta_slope * dw;
    st.lam_r += sl.h * dw;
    st.omega = w_next;

    if (dw < 0.0) {
      path.segments.push_back(std::move(seg));
      path.breakpoints.push_back(w_next);
    }

    if (nb.kind == NextBreakpoint::Kind::terminal || w_next <= 0.0) break;

    bool sets_changed = true;
    if (nb.kind == NextBreakpoint::Kind::elbow_exit) {
      st.theta(nb.case_index) = nb.boundary;
      move_between(st.part.elbow,
                   nb.boundary == cfg.tau ? st.part.right : st.part.left,
                   nb.case_index);
      if (st.gram.size() > 1)
        st.gram.remove_row(st.gram.position_of(nb.case_index));
      else
        st.gram = ElbowGramInverse();  // snapped back in on the next pass
      st.lam_r(nb.case_index) = 0.0;
      parked.assign(parked.size(), 0);  // spanning rows changed
    } else {
      st.lam_r(nb.case_index) = 0.0;
      try {
        st.gram.add_row(xtilde.row(nb.case_index).transpose(), nb.case_index);
        move_between(st.part.in_left(nb.case_index) ? st.part.left
                                                    : st.part.right,
                     st.part.elbow, nb.case_index);
      } catch (const Error&) {
        // Linearly dependent on the current elbow rows: the case rides along
        // at zero residual with its dual pinned. Park it until an exit frees
        // the spanning rows.
        parked[static_cast<std::size_t>(nb.case_index)] = 1;
        sets_changed = false;
      }
    }
    st.last_moved = nb.case_index;
    if (sets_changed) count_event(w_next);

    if (static_cast<Index>(st.part.elbow.size()) > std::min(p + 1, n))
      throw Error(ErrorCode::consistency, "omega path: elbow size bound violated");
    if (++events_since_beta_sync >= 32) {
      st.lbeta = data.X.transpose() * st.theta;
      events_since_beta_sync = 0;
    }
    if (!st.part.elbow.empty()) certify_or_recover("breakpoint");
    if (path.n_events > cap)
      throw Error(ErrorCode::divergence,
                  "omega path: breakpoint count exceeded 50(n+p); "
                  "data may violate general position");
  }

  if (path.breakpoints.back() != 0.0) path.breakpoints.push_back(0.0);
  st.omega = 0.0;
  st.theta(istar) = 0.0;
  path.terminal = state_solution(st, data, cfg, istar);
  if (kkt_residual(path.terminal, data, cfg) > cert_tol) {
    certify_or_recover("terminal");
    path.terminal = state_solution(st, data, cfg, istar);
  }
  return path;
}

QuantileSolution eval_at(const OmegaPath& path, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0))
    throw Error(ErrorCode::invalid_argument, "eval_at: omega outside [0,1]");
  if (omega == 0.0) return path.terminal;
  if (path.segments.empty()) {
    QuantileSolution sol = path.terminal;
    sol.omega = omega;
    return sol;
  }
  // Segments are ordered with decreasing omega_hi; find the covering one.
  std::size_t k = 0;
  while (k + 1 < path.segments.size() && omega < path.segments[k].omega_lo)
    ++k;
  const OmegaSegment& seg = path.segments[k];
  const double dw = omega - seg.omega_hi;

  QuantileSolution sol = seg.anchor;
  sol.omega = omega;
  for (std::size_t j = 0; j < seg.slope.elbow_order.size(); ++j)
    sol.theta(seg.slope.elbow_order[j]) +=
        seg.slope.b(static_cast<Index>(j)) * dw;
  if (!seg.star_in_elbow) {
    const double s =
        path.tau - (seg.partition.in_left(path.istar) ? 1.0 : 0.0);
    sol.theta(path.istar) = omega * s;
  }
  sol.beta0 += seg.slope.b0 * dw / path.lambda;
  sol.beta += seg.slope.beta_slope * dw / path.lambda;
  sol.residuals += seg.slope.h * dw / path.lambda;
  return sol;
}

}  // namespace qrrp
