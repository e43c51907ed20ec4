#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrrp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  invalid_argument,
  singular_elbow,
  divergence,
  oracle_failure,
  consistency,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code);

/// Relative scale used by all residual tolerances: max(1, ||y||_inf).
double residual_scale(const Vector& y);

/// A case is in the elbow iff |r_i| <= kElbowTol * residual_scale(y).
inline constexpr double kElbowTol = 1e-9;

/// Absolute tolerance for dual-boundary comparisons (theta lives in [tau-1, tau]).
inline constexpr double kThetaTol = 1e-12;

struct Dataset {
  Matrix X;  // n x p covariates
  Vector y;  // n responses

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }

  /// Expanded design (1, X) with rows xtilde_i = (1, x_i^T)^T.
  Matrix xtilde() const;

  /// Throws invalid_argument unless n >= 2, p >= 1 and all entries are finite.
  void validate() const;

  /// Copy with row istar removed.
  Dataset without_case(Index istar) const;
};

struct FitConfig {
  double tau = 0.5;     // quantile level in (0,1)
  double lambda = 1.0;  // ridge penalty, > 0 (0 is rejected: the path algebra divides by lambda)

  void validate() const;
};

struct Partition {
  std::vector<Index> elbow;  // E: zero residual
  std::vector<Index> left;   // L: negative residual
  std::vector<Index> right;  // R: positive residual

  std::size_t size() const { return elbow.size() + left.size() + right.size(); }
  bool in_elbow(Index i) const;
  bool in_left(Index i) const;
  bool in_right(Index i) const;
  void sort_all();

  /// Throws unless E, L, R are disjoint and cover {0,...,n-1}.
  void validate(Index n) const;
};

struct QuantileSolution {
  double beta0 = 0.0;
  Vector beta;       // p
  Vector theta;      // n dual variables
  Vector residuals;  // r_i = y_i - beta0 - x_i^T beta
  Partition partition;
  double omega = 1.0;
  std::optional<Index> starred;  // i*, present when omega weighting applies

  Vector fitted(const Vector& y) const { return y - residuals; }
};

/// Check loss rho_tau(r) = tau*max(r,0) + (1-tau)*max(-r,0).
inline double check_loss(double r, double tau) {
  return r >= 0.0 ? tau * r : (tau - 1.0) * r;
}

/// Case-weight adjusted objective:
///   sum_{i != istar} rho_tau(r_i) + omega * rho_tau(r_istar) + (lambda/2)||beta||^2.
double objective(const Dataset& data, const FitConfig& cfg, double omega,
                 Index istar, double beta0, const Vector& beta);

/// Full-data objective (omega = 1 regardless of starred case).
double objective_full(const Dataset& data, const FitConfig& cfg, double beta0,
                      const Vector& beta);

}  // namespace qrrp
