#include "qrrp/lambda_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qrrp/gram.hpp"
#include "qrrp/kkt.hpp"
#include "qrrp/oracle.hpp"

namespace qrrp {

namespace {

constexpr double kCertTol = 1e-8;

struct PathState {
  double lam = 0.0;
  double lb0 = 0.0;  // lambda * beta0
  Vector theta;
  Vector lam_r;  // lambda * residuals
  Partition part;
  ElbowGramInverse gram;
  Index last_moved = -1;
};

QuantileSolution state_solution(const PathState& st, const Dataset& data) {
  QuantileSolution sol;
  sol.omega = 1.0;
  sol.beta0 = st.lb0 / st.lam;
  sol.beta = data.X.transpose() * st.theta / st.lam;
  sol.theta = st.theta;
  sol.residuals = st.lam_r / st.lam;
  sol.partition = st.part;
  return sol;
}

// Exact re-solve of the KKT system on the current partition; removes drift.
void resync_state(PathState& st, const Dataset& data, const FitConfig& cfg,
                  const Matrix& xtilde) {
  st.gram.refresh();
  const QuantileSolution sol = solution_from_partition(
      data, cfg, 1.0, std::nullopt, st.part, xtilde, st.gram.elbow(),
      st.gram.inv());
  st.theta = sol.theta;
  st.lb0 = cfg.lambda * sol.beta0;
  st.lam_r = cfg.lambda * sol.residuals;
}

void adopt_oracle(PathState& st, const Dataset& data, double tau,
                  const Matrix& xtilde) {
  const FitConfig cfg{tau, st.lam};
  QuantileSolution sol = oracle_solve(data, cfg, 1.0);
  st.theta = sol.theta;
  st.lb0 = st.lam * sol.beta0;
  st.lam_r = st.lam * sol.residuals;
  st.part = sol.partition;
  st.part.sort_all();
  st.gram = ElbowGramInverse::from_design(xtilde, st.part.elbow);
  st.last_moved = -1;
}

struct Candidate {
  double lam = -1.0;
  bool is_exit = false;
  Index case_index = -1;
  Index gram_pos = -1;
  double target = 0.0;  // dual boundary reached, exits only
};

void move_between(std::vector<Index>& from, std::vector<Index>& to, Index i) {
  from.erase(std::find(from.begin(), from.end(), i));
  to.insert(std::lower_bound(to.begin(), to.end(), i), i);
}

}  // namespace

double LambdaPath::smallest_event() const {
  if (n_events == 0)
    throw Error(ErrorCode::invalid_argument, "lambda path has no breakpoints");
  return lambdas[static_cast<std::size_t>(n_events) - 1];
}

QuantileSolution LambdaPath::eval(const Dataset& data, double lambda) const {
  if (!(lambda > 0.0))
    throw Error(ErrorCode::invalid_argument, "lambda path eval: lambda <= 0");
  if (lambda < lambda_min * (1.0 - 1e-12))
    throw Error(ErrorCode::invalid_argument,
                "lambda path eval: below the built range");

  Vector theta;
  double lb0 = 0.0;
  const Partition* part = nullptr;
  if (lambda >= lambdas.front()) {
    theta = thetas.front();
    lb0 = lambda_beta0.front() + top_lb0_slope * (lambda - lambdas.front());
    part = &top_partition;
  } else {
    // lambdas strictly decreasing; find k with lambdas[k] >= lambda >= lambdas[k+1].
    std::size_t k = 0;
    {
      auto it = std::upper_bound(lambdas.begin(), lambdas.end(), lambda,
                                 std::greater<double>());
      k = static_cast<std::size_t>(it - lambdas.begin()) - 1;
      if (k + 1 >= lambdas.size()) k = lambdas.size() - 2;
    }
    const double hi = lambdas[k], lo = lambdas[k + 1];
    const double t = (lambda - lo) / (hi - lo);
    theta = t * thetas[k] + (1.0 - t) * thetas[k + 1];
    lb0 = t * lambda_beta0[k] + (1.0 - t) * lambda_beta0[k + 1];
    part = &partitions[k];
  }

  QuantileSolution sol;
  sol.omega = 1.0;
  sol.partition = *part;
  sol.theta = std::move(theta);
  sol.beta0 = lb0 / lambda;
  sol.beta = data.X.transpose() * sol.theta / lambda;
  sol.residuals = data.y - Vector::Constant(data.n(), sol.beta0) -
                  data.X * sol.beta;
  for (Index e : sol.partition.elbow) sol.residuals(e) = 0.0;
  return sol;
}

LambdaPath build_lambda_path(const Dataset& data, double tau,
                             double lambda_min) {
  data.validate();
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorCode::invalid_argument, "build_lambda_path: bad tau");
  if (!(lambda_min > 0.0))
    throw Error(ErrorCode::invalid_argument, "build_lambda_path: lambda_min <= 0");

  const Index n = data.n();
  const Index p = data.p();
  const Matrix xtilde = data.xtilde();
  const double scale = residual_scale(data.y);
  const double cert_tol = kCertTol * scale;
  const Index cap = 50 * (n + p);

  LambdaPath path;
  path.tau = tau;
  path.lambda_min = lambda_min;

  // ---- Initialization at lambda = infinity: beta = 0, beta0 at a sample
  // tau-quantile, one order-statistic case seeded into the elbow. When
  // n*tau is an integer the dual is non-unique; the seed dual then sits at
  // the boundary tau-1 (smallest-index order statistic).
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return data.y(a) < data.y(b);
  });
  const double ntau = static_cast<double>(n) * tau;
  const bool integral = std::abs(ntau - std::round(ntau)) <= 1e-9 * n;
  const Index k1 = integral ? static_cast<Index>(std::llround(ntau))
                            : static_cast<Index>(std::ceil(ntau));
  const Index e = order[static_cast<std::size_t>(k1) - 1];

  PathState st;
  st.theta = Vector::Zero(n);
  for (Index j = 0; j < k1 - 1; ++j) {
    st.part.left.push_back(order[static_cast<std::size_t>(j)]);
    st.theta(order[static_cast<std::size_t>(j)]) = tau - 1.0;
  }
  for (Index j = k1; j < n; ++j) {
    st.part.right.push_back(order[static_cast<std::size_t>(j)]);
    st.theta(order[static_cast<std::size_t>(j)]) = tau;
  }
  st.part.elbow.push_back(e);
  st.theta(e) = -((tau - 1.0) * double(k1 - 1) + tau * double(n - k1));
  st.part.sort_all();

  path.top_partition = st.part;
  path.top_lb0_slope = data.y(e);

  // First event: with a single pinned-sum elbow case the dual is constant,
  // so only residual zero-crossings can occur.
  const Vector v = data.X.transpose() * st.theta;
  double lam0 = -std::numeric_limits<double>::infinity();
  Index first_in = -1;
  for (Index i = 0; i < n; ++i) {
    if (i == e) continue;
    const double denom = data.y(e) - data.y(i);
    if (std::abs(denom) < 1e-300) continue;
    const double cand = (data.X.row(e) - data.X.row(i)).dot(v) / denom;
    if (cand > lam0) {
      lam0 = cand;
      first_in = i;
    }
  }

  const double xev = data.X.row(e).dot(v);
  if (!(lam0 > lambda_min)) {
    // No breakpoint above lambda_min; the top segment covers the whole range.
    st.lam = lambda_min;
    path.lambdas.push_back(lambda_min);
    path.lambda_beta0.push_back(lambda_min * data.y(e) - xev);
    path.thetas.push_back(st.theta);
    path.n_events = 0;
    return path;
  }

  st.lam = lam0;
  st.lb0 = lam0 * data.y(e) - xev;
  st.lam_r = lam0 * data.y - Vector::Constant(n, st.lb0) - data.X * v;
  st.lam_r(e) = 0.0;
  st.lam_r(first_in) = 0.0;
  move_between(st.part.in_left(first_in) ? st.part.left : st.part.right,
               st.part.elbow, first_in);
  st.gram = ElbowGramInverse::from_design(xtilde, {e, first_in});
  st.last_moved = first_in;

  const FitConfig cfg0{tau, st.lam};
  if (kkt_residual(state_solution(st, data), data, cfg0) > cert_tol)
    adopt_oracle(st, data, tau, xtilde);

  path.lambdas.push_back(st.lam);
  path.lambda_beta0.push_back(st.lb0);
  path.thetas.push_back(st.theta);
  path.partitions.push_back(st.part);
  path.n_events = 1;

  // ---- Event loop.
  Vector u_buf, t_buf, b_buf, g_buf;
  std::vector<char> parked(static_cast<std::size_t>(n), 0);
  while (st.lam > lambda_min) {
    const Index k = st.gram.size();
    const auto& elbow = st.gram.elbow();

    u_buf = st.gram.inv().rowwise().sum();
    Vector ye(k);
    for (Index j = 0; j < k; ++j) ye(j) = data.y(elbow[static_cast<std::size_t>(j)]);
    t_buf = st.gram.inv() * ye;
    const double a_u = t_buf.sum() / u_buf.sum();
    b_buf = t_buf - a_u * u_buf;
    g_buf = data.y - Vector::Constant(n, a_u) -
            xtilde * (st.gram.rows().transpose() * b_buf);
    for (Index j = 0; j < k; ++j) g_buf(elbow[static_cast<std::size_t>(j)]) = 0.0;

    std::vector<Candidate> cands;
    for (Index j = 0; j < k; ++j) {
      const Index c = elbow[static_cast<std::size_t>(j)];
      const double bj = b_buf(j);
      if (bj == 0.0) continue;
      const double target = bj < 0.0 ? tau : tau - 1.0;
      double raw = target - st.theta(c);
      if (std::abs(raw) <= kThetaTol) raw = 0.0;
      const double step = raw / bj;
      if (step > 0.0) continue;
      if (step == 0.0 && c == st.last_moved) continue;
      const double lc = st.lam + step;
      if (!(lc > 0.0)) continue;
      cands.push_back({lc, true, c, j, target});
    }
    auto entry_cands = [&](const std::vector<Index>& side, bool is_left) {
      for (Index i : side) {
        if (parked[static_cast<std::size_t>(i)]) continue;
        const double gi = g_buf(i);
        if (gi == 0.0) continue;
        const double step = -st.lam_r(i) / gi;
        if (step >= 0.0) {
          // Zero-residual ride-along enters only when the slope would push
          // it to the wrong side of the elbow.
          const bool wrong_side = is_left ? gi < 0.0 : gi > 0.0;
          if (!(step == 0.0 && wrong_side && i != st.last_moved)) continue;
        }
        const double lc = st.lam + std::min(step, 0.0);
        if (!(lc > 0.0)) continue;
        cands.push_back({lc, false, i, -1, 0.0});
      }
    };
    entry_cands(st.part.left, true);
    entry_cands(st.part.right, false);

    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : cands) best = std::max(best, c.lam);

    if (cands.empty() || best <= lambda_min) {
      const double dl = lambda_min - st.lam;
      for (Index j = 0; j < k; ++j)
        st.theta(elbow[static_cast<std::size_t>(j)]) += b_buf(j) * dl;
      st.lb0 += a_u * dl;
      st.lam_r += g_buf * dl;
      st.lam = lambda_min;
      path.lambdas.push_back(st.lam);
      path.lambda_beta0.push_back(st.lb0);
      path.thetas.push_back(st.theta);
      break;
    }

    std::vector<Candidate> at_best;
    for (const auto& c : cands)
      if (c.lam >= best - 1e-12 * std::max(1.0, best)) at_best.push_back(c);

    // Advance the state to the event.
    const double dl = best - st.lam;
    for (Index j = 0; j < k; ++j)
      st.theta(elbow[static_cast<std::size_t>(j)]) += b_buf(j) * dl;
    st.lb0 += a_u * dl;
    st.lam_r += g_buf * dl;
    const bool zero_length = (dl == 0.0);
    st.lam = best;

    {
      // Ties are processed one event at a time: entries first, then the
      // smallest case index. The certificate below falls back to the oracle
      // if this ordering ever picks wrong.
      const Candidate* pick = nullptr;
      for (const auto& c : at_best)
        if (!pick || (!c.is_exit && pick->is_exit) ||
            (c.is_exit == pick->is_exit && c.case_index < pick->case_index))
          pick = &c;
      const Candidate& ev = *pick;
      if (ev.is_exit) {
        st.theta(ev.case_index) = ev.target;
        st.gram.remove_row(ev.gram_pos);
        move_between(st.part.elbow,
                     ev.target == tau ? st.part.right : st.part.left,
                     ev.case_index);
        parked.assign(parked.size(), 0);  // spanning rows changed
      } else {
        st.lam_r(ev.case_index) = 0.0;
        try {
          st.gram.add_row(xtilde.row(ev.case_index).transpose(),
                          ev.case_index);
          move_between(st.part.in_left(ev.case_index) ? st.part.left
                                                      : st.part.right,
                       st.part.elbow, ev.case_index);
        } catch (const Error&) {
          // Dependent on the current elbow rows; rides along at zero
          // residual until an exit frees the spanning rows.
          parked[static_cast<std::size_t>(ev.case_index)] = 1;
        }
      }
      st.last_moved = ev.case_index;
    }

    if (static_cast<Index>(st.part.elbow.size()) > std::min(p + 1, n))
      throw Error(ErrorCode::consistency, "lambda path: elbow size bound violated");

    // Certify; on failure re-solve the KKT system on this partition exactly,
    // then fall back to the oracle.
    const FitConfig cfg{tau, st.lam};
    if (path.n_events % 32 == 31) resync_state(st, data, cfg, xtilde);
    if (kkt_residual(state_solution(st, data), data, cfg) > cert_tol) {
      resync_state(st, data, cfg, xtilde);
      if (kkt_residual(state_solution(st, data), data, cfg) > cert_tol) {
        adopt_oracle(st, data, tau, xtilde);
        if (kkt_residual(state_solution(st, data), data, cfg) > cert_tol)
          throw Error(ErrorCode::consistency,
                      "lambda path: certificate failure at lambda=" +
                          std::to_string(st.lam));
      }
    }

    if (zero_length && !path.lambdas.empty() &&
        path.lambdas.back() == st.lam) {
      path.lambda_beta0.back() = st.lb0;
      path.thetas.back() = st.theta;
      path.partitions.back() = st.part;
    } else {
      path.lambdas.push_back(st.lam);
      path.lambda_beta0.push_back(st.lb0);
      path.thetas.push_back(st.theta);
      path.partitions.push_back(st.part);
      ++path.n_events;
    }
    if (path.n_events > cap)
      throw Error(ErrorCode::divergence,
                  "lambda path: breakpoint count exceeded 50(n+p); "
                  "data may violate general position");
  }

  if (path.partitions.size() == path.lambdas.size())
    path.partitions.pop_back();  // event landed exactly on lambda_min
  return path;
}

QuantileSolution full_fit_at(const Dataset& data, double tau, double lambda) {
  if (!(lambda > 0.0))
    throw Error(ErrorCode::invalid_argument, "full_fit_at: lambda <= 0");
  const LambdaPath path = build_lambda_path(data, tau, lambda);
  QuantileSolution sol = path.eval(data, lambda);
  const FitConfig cfg{tau, lambda};
  if (kkt_residual(sol, data, cfg) > kCertTol * residual_scale(data.y)) {
    sol = oracle_solve(data, cfg, 1.0);
    sol.partition.sort_all();
  }
  return sol;
}

Vector log_space(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo))
    throw Error(ErrorCode::invalid_argument, "log_space: need hi > lo > 0, n >= 2");
  Vector out(n);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i)
    out(i) = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
  out(0) = lo;
  out(n - 1) = hi;
  return out;
}

Vector lambda_grid(const LambdaPath& path, int n_lambda) {
  if (n_lambda < 2)
    throw Error(ErrorCode::invalid_argument, "lambda_grid: n_lambda < 2");
  if (path.n_events < 2)
    throw Error(ErrorCode::invalid_argument, "lambda_grid: path has fewer than 2 breakpoints");
  const double hi = path.lambda_max();
  const double lo = std::max(path.smallest_event(), path.lambda_min);
  return log_space(lo, hi, n_lambda).reverse();
}

}  // namespace qrrp
