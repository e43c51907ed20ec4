#include "qrrp/types.hpp"

#include <algorithm>
#include <cmath>

namespace qrrp {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::singular_elbow: return "singular_elbow";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::oracle_failure: return "oracle_failure";
    case ErrorCode::consistency: return "consistency";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

double residual_scale(const Vector& y) {
  return std::max(1.0, y.size() ? y.cwiseAbs().maxCoeff() : 0.0);
}

Matrix Dataset::xtilde() const {
  Matrix xt(n(), p() + 1);
  xt.col(0).setOnes();
  xt.rightCols(p()) = X;
  return xt;
}

void Dataset::validate() const {
  if (X.rows() != y.size())
    throw Error(ErrorCode::invalid_argument, "Dataset: X rows and y length differ");
  if (n() < 2 || p() < 1)
    throw Error(ErrorCode::invalid_argument, "Dataset: need n >= 2 and p >= 1");
  if (!X.allFinite() || !y.allFinite())
    throw Error(ErrorCode::invalid_argument, "Dataset: non-finite entries");
}

Dataset Dataset::without_case(Index istar) const {
  if (istar < 0 || istar >= n())
    throw Error(ErrorCode::invalid_argument, "without_case: index out of range");
  Dataset out;
  out.X.resize(n() - 1, p());
  out.y.resize(n() - 1);
  Index k = 0;
  for (Index i = 0; i < n(); ++i) {
    if (i == istar) continue;
    out.X.row(k) = X.row(i);
    out.y(k) = y(i);
    ++k;
  }
  return out;
}

void FitConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0) || !std::isfinite(tau))
    throw Error(ErrorCode::invalid_argument, "FitConfig: tau must lie in (0,1)");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::invalid_argument, "FitConfig: lambda must be positive");
}

bool Partition::in_elbow(Index i) const {
  return std::find(elbow.begin(), elbow.end(), i) != elbow.end();
}
bool Partition::in_left(Index i) const {
  return std::find(left.begin(), left.end(), i) != left.end();
}
bool Partition::in_right(Index i) const {
  return std::find(right.begin(), right.end(), i) != right.end();
}

void Partition::sort_all() {
  std::sort(elbow.begin(), elbow.end());
  std::sort(left.begin(), left.end());
  std::sort(right.begin(), right.end());
}

void Partition::validate(Index n) const {
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  auto mark = [&](const std::vector<Index>& set) {
    for (Index i : set) {
      if (i < 0 || i >= n)
        throw Error(ErrorCode::invalid_argument, "Partition: index out of range");
      if (seen[static_cast<std::size_t>(i)]++)
        throw Error(ErrorCode::invalid_argument, "Partition: sets overlap");
    }
  };
  mark(elbow);
  mark(left);
  mark(right);
  if (size() != static_cast<std::size_t>(n))
    throw Error(ErrorCode::invalid_argument, "Partition: sets do not cover all cases");
}

double objective(const Dataset& data, const FitConfig& cfg, double omega,
                 Index istar, double beta0, const Vector& beta) {
  const Vector r = data.y - Vector::Constant(data.n(), beta0) - data.X * beta;
  double loss = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double w = (i == istar) ? omega : 1.0;
    loss += w * check_loss(r(i), cfg.tau);
  }
  return loss + 0.5 * cfg.lambda * beta.squaredNorm();
}

double objective_full(const Dataset& data, const FitConfig& cfg, double beta0,
                      const Vector& beta) {
  return objective(data, cfg, 1.0, -1, beta0, beta);
}

}  // namespace qrrp
