#include "qrrp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "qrrp/kkt.hpp"
#include "qrrp/lambda_path.hpp"
#include "qrrp/omega_path.hpp"
#include "qrrp/oracle.hpp"
#include "qrrp/simulate.hpp"

namespace qrrp {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

template <typename Fn>
double median_time(int reps, Fn&& body) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    times.push_back(seconds_since(t0));
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchEntry& entry,
                                const BenchOptions& opt) {
  if (entry.n < 2 || entry.p < 1 || !(entry.tau > 0.0 && entry.tau < 1.0))
    throw Error(ErrorCode::invalid_argument, "bench: infeasible grid entry");
  if (opt.n_lambda < 2 || opt.replicates < 1 || opt.inner_reps < 1)
    throw Error(ErrorCode::invalid_argument, "bench: bad options");

  const Index n = entry.n;
  std::vector<BenchRow> rows;
  for (int rep = 0; rep < opt.replicates; ++rep) {
    const std::uint64_t seed =
        opt.seed + 977u * static_cast<std::uint64_t>(rep);
    const Dataset data = simulate({entry.n, entry.p, seed});

    const LambdaPath full_path = build_lambda_path(
        data, entry.tau, opt.lambda_lo > 0.0 ? opt.lambda_lo : 1e-4);
    Vector grid;
    if (opt.lambda_lo > 0.0 && opt.lambda_hi > opt.lambda_lo)
      grid = log_space(opt.lambda_lo, opt.lambda_hi, opt.n_lambda).reverse();
    else
      grid = lambda_grid(full_path, opt.n_lambda);

    BenchRow row;
    row.n = entry.n;
    row.p = entry.p;
    row.tau = entry.tau;
    row.replicate = rep;
    row.seed = seed;

    // Omega-path strategy: per grid point, interpolate the full-data
    // solution and run one path per case. Breakpoint counts come from the
    // first pass (the computation is deterministic).
    long total_events = 0;
    bool count_pass = true;
    double rcv_min = std::numeric_limits<double>::infinity();
    row.rpc_omega =
        median_time(opt.inner_reps, [&]() {
          double local_min = std::numeric_limits<double>::infinity();
          for (Index k = 0; k < grid.size(); ++k) {
            const FitConfig cfg{entry.tau, grid(k)};
            const QuantileSolution full = full_path.eval(data, grid(k));
            const OmegaShared shared = make_omega_shared(data, cfg, full);
            double rcv = 0.0;
            for (Index i = 0; i < n; ++i) {
              const OmegaPath path =
                  build_omega_path(data, cfg, i, full, shared);
              rcv += check_loss(path.terminal.residuals(i), entry.tau);
              if (count_pass) total_events += path.n_events;
            }
            local_min = std::min(local_min, rcv / double(n));
          }
          count_pass = false;
          rcv_min = local_min;
        }) /
        double(n);
    row.mean_breakpoints =
        double(total_events) / (double(grid.size()) * double(n));
    row.rcv_min = rcv_min;

    row.rpc_lambda = std::numeric_limits<double>::quiet_NaN();
    if (opt.lambda_baseline) {
      const double lambda_min = grid(grid.size() - 1);
      row.rpc_lambda =
          median_time(opt.inner_reps, [&]() {
            for (Index i = 0; i < n; ++i) {
              const Dataset loo = data.without_case(i);
              const LambdaPath path =
                  build_lambda_path(loo, entry.tau, lambda_min);
              for (Index k = 0; k < grid.size(); ++k) {
                const QuantileSolution sol = path.eval(loo, grid(k));
                volatile double keep =
                    sol.beta0 + data.X.row(i).dot(sol.beta);
                (void)keep;
              }
            }
          }) /
          double(n);
    }

    row.rpc_refit = std::numeric_limits<double>::quiet_NaN();
    if (opt.refit_baseline) {
      row.rpc_refit =
          median_time(opt.inner_reps, [&]() {
            for (Index i = 0; i < n; ++i) {
              const Dataset loo = data.without_case(i);
              for (Index k = 0; k < grid.size(); ++k) {
                const QuantileSolution sol =
                    oracle_solve(loo, FitConfig{entry.tau, grid(k)}, 1.0);
                volatile double keep = sol.beta0;
                (void)keep;
              }
            }
          }) /
          double(n);
    }

    rows.push_back(row);
  }
  return rows;
}

BenchSummary summarize_bench(const std::vector<BenchRow>& rows) {
  if (rows.empty())
    throw Error(ErrorCode::invalid_argument, "bench summary: no rows");
  BenchSummary s;
  s.n = rows.front().n;
  s.p = rows.front().p;
  s.tau = rows.front().tau;
  s.replicates = static_cast<int>(rows.size());
  double sum = 0.0, sum_o = 0.0, sum_l = 0.0, sum_r = 0.0;
  int n_l = 0, n_r = 0;
  for (const auto& r : rows) {
    sum += r.mean_breakpoints;
    sum_o += r.rpc_omega;
    if (!std::isnan(r.rpc_lambda)) {
      sum_l += r.rpc_lambda;
      ++n_l;
    }
    if (!std::isnan(r.rpc_refit)) {
      sum_r += r.rpc_refit;
      ++n_r;
    }
  }
  const double m = double(rows.size());
  s.mean_breakpoints = sum / m;
  s.mean_rpc_omega = sum_o / m;
  s.mean_rpc_lambda = n_l ? sum_l / n_l : std::numeric_limits<double>::quiet_NaN();
  s.mean_rpc_refit = n_r ? sum_r / n_r : std::numeric_limits<double>::quiet_NaN();
  double ss = 0.0;
  for (const auto& r : rows) {
    const double d = r.mean_breakpoints - s.mean_breakpoints;
    ss += d * d;
  }
  s.se_breakpoints = rows.size() > 1 ? std::sqrt(ss / (m - 1.0) / m) : 0.0;
  return s;
}

}  // namespace qrrp
