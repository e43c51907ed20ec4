#pragma once

#include "qrrp/gram.hpp"
#include "qrrp/types.hpp"

namespace qrrp {

/// Slopes of (lambda*beta0, theta_E, lambda*r) in omega on a segment where
/// the starred case sits left or right of the elbow.
struct SlopeSet {
  double b0 = 0.0;                // d(lambda*beta0)/domega
  Vector b;                       // d(theta_E)/domega, in elbow_order
  std::vector<Index> elbow_order; // gram ordering the slopes refer to
  Vector h;                       // d(lambda*r)/domega, length n (zero on E)
  Vector beta_slope;              // d(lambda*beta)/domega, length p
};

SlopeSet slopes(const Dataset& data, const FitConfig& cfg,
                const Partition& partition, Index istar,
                const ElbowGramInverse& gram);

struct OmegaSegment {
  double omega_hi = 1.0;
  double omega_lo = 0.0;
  Partition partition;
  bool star_in_elbow = false;  // true only on the initial constant stretch
  SlopeSet slope;
  QuantileSolution anchor;  // solution at omega_hi
};

struct OmegaPath {
  Index istar = 0;
  double tau = 0.5;
  double lambda = 1.0;
  std::vector<OmegaSegment> segments;  // ordered, covering [0, 1]
  std::vector<double> breakpoints;     // 1 = w_0 > w_1 > ... > 0
  QuantileSolution terminal;           // at omega = 0 (the LOO solution)
  int n_events = 0;                    // set changes at omega in (0,1)
  std::vector<std::string> warnings;
};

/// Immutable per-(data, lambda) inputs shared by the n per-case paths.
struct OmegaShared {
  Matrix xtilde;
  ElbowGramInverse gram;  // inverse for the full-data elbow
};

OmegaShared make_omega_shared(const Dataset& data, const FitConfig& cfg,
                              const QuantileSolution& full);

/// Runs the case-weight path from the full-data solution at omega = 1 down
/// to the case-deleted solution at omega = 0. Every breakpoint is
/// KKT-certified; failures recover through an exact re-solve and then the
/// oracle before giving up.
OmegaPath build_omega_path(const Dataset& data, const FitConfig& cfg,
                           Index istar, const QuantileSolution& full);

/// Hot-path variant reusing the shared elbow inverse; `full` must already
/// carry a valid certificate (make_omega_shared checks it).
OmegaPath build_omega_path(const Dataset& data, const FitConfig& cfg,
                           Index istar, const QuantileSolution& full,
                           const OmegaShared& shared);

/// Affine interpolation on the covering segment; exact at breakpoints.
QuantileSolution eval_at(const OmegaPath& path, double omega);

/// Candidate breakpoint scan, exposed for unit tests: returns the next
/// breakpoint below omega_m and what triggers it.
struct NextBreakpoint {
  double omega = 0.0;
  enum class Kind { elbow_exit, elbow_entry, terminal } kind = Kind::terminal;
  Index case_index = -1;
  double boundary = 0.0;  // dual bound reached (exits only)
};

NextBreakpoint next_breakpoint(double omega_m, double tau,
                               const Vector& theta, const Vector& lam_r,
                               const SlopeSet& slope,
                               const Partition& partition, Index istar,
                               Index last_moved = -1,
                               const std::vector<char>* parked = nullptr);

}  // namespace qrrp
