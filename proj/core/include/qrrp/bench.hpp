#pragma once

#include <cstdint>

#include "qrrp/types.hpp"

namespace qrrp {

struct BenchEntry {
  Index n = 0;
  Index p = 0;
  double tau = 0.5;
};

struct BenchOptions {
  int n_lambda = 50;
  int replicates = 20;
  std::uint64_t seed = 1;
  // Fixed grid range; non-positive values select the automatic range spanned
  // by the full-data lambda-path breakpoints (clamped below at 1e-4).
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  bool lambda_baseline = true;  // lambda path per case-deleted dataset
  bool refit_baseline = false;  // oracle refit per (case, lambda)
  int inner_reps = 3;           // wall-clock median of this many repetitions
};

struct BenchRow {
  Index n = 0;
  Index p = 0;
  double tau = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  double rpc_omega = 0.0;    // runtime per case, omega-path strategy
  double rpc_lambda = 0.0;   // runtime per case, lambda-path-per-LOO baseline (NaN if skipped)
  double rpc_refit = 0.0;    // runtime per case, oracle refit baseline (NaN if skipped)
  double mean_breakpoints = 0.0;  // omega breakpoints averaged over (lambda, case)
  double rcv_min = 0.0;           // smallest RCV over the grid (sanity echo)
};

struct BenchSummary {
  Index n = 0;
  Index p = 0;
  double tau = 0.0;
  int replicates = 0;
  double mean_breakpoints = 0.0;
  double se_breakpoints = 0.0;  // standard error over replicates
  double mean_rpc_omega = 0.0;
  double mean_rpc_lambda = 0.0;
  double mean_rpc_refit = 0.0;
};

/// Runs the breakpoint/runtime protocol for one (n, p, tau) setting:
/// `replicates` simulated datasets, an N_lambda grid per dataset, exact LOO
/// via omega paths plus the requested baselines. Timings exclude I/O and the
/// full-data path construction shared by both strategies; each quantity is
/// the median of `inner_reps` repetitions. Single-threaded by design so the
/// per-case numbers are comparable.
std::vector<BenchRow> run_bench(const BenchEntry& entry,
                                const BenchOptions& options);

BenchSummary summarize_bench(const std::vector<BenchRow>& rows);

}  // namespace qrrp
