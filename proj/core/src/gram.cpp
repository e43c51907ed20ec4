#include "qrrp/gram.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace qrrp {

ElbowGramInverse ElbowGramInverse::init(const Matrix& xtilde_rows,
                                        std::vector<Index> elbow) {
  if (xtilde_rows.rows() != static_cast<Index>(elbow.size()))
    throw Error(ErrorCode::invalid_argument, "gram init: row/index count mismatch");
  if (elbow.empty())
    throw Error(ErrorCode::invalid_argument, "gram init: empty elbow");

  ElbowGramInverse g;
  g.rows_ = xtilde_rows;
  g.elbow_ = std::move(elbow);

  const Matrix gram = g.rows_ * g.rows_.transpose();
  Eigen::JacobiSVD<Matrix> svd(gram);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw Error(ErrorCode::singular_elbow,
                "gram init: elbow Gram is numerically singular "
                "(general position violated)");
  g.inv_ = gram.llt().solve(Matrix::Identity(gram.rows(), gram.cols()));
  // Symmetrize; LLT solves carry tiny asymmetry.
  g.inv_ = 0.5 * (g.inv_ + g.inv_.transpose()).eval();
  g.updates_since_refresh_ = 0;
  return g;
}

ElbowGramInverse ElbowGramInverse::from_design(const Matrix& xtilde,
                                               const std::vector<Index>& elbow) {
  Matrix rows(static_cast<Index>(elbow.size()), xtilde.cols());
  for (std::size_t j = 0; j < elbow.size(); ++j)
    rows.row(static_cast<Index>(j)) = xtilde.row(elbow[j]);
  return init(rows, elbow);
}

void ElbowGramInverse::add_row(const Vector& xtilde_row, Index case_index) {
  const Index k = size();
  if (k == 0) {
    const double d = xtilde_row.squaredNorm();
    if (!(d > 0.0))
      throw Error(ErrorCode::singular_elbow, "gram add: zero row");
    inv_ = Matrix::Constant(1, 1, 1.0 / d);
    rows_ = xtilde_row.transpose();
    elbow_ = {case_index};
    updates_since_refresh_ = 0;
    return;
  }

  const Vector u = rows_ * xtilde_row;        // Xt_E * x_new
  const Vector giu = inv_ * u;                // G^{-1} u
  const double d = xtilde_row.squaredNorm();
  const double schur = d - u.dot(giu);
  if (!(schur > 1e-12 * std::max(1.0, d)))
    throw Error(ErrorCode::singular_elbow,
                "gram add: Schur complement at numerical floor");

  Matrix next(k + 1, k + 1);
  next.topLeftCorner(k, k) = inv_ + (giu * giu.transpose()) / schur;
  next.topRightCorner(k, 1) = -giu / schur;
  next.bottomLeftCorner(1, k) = (-giu / schur).transpose();
  next(k, k) = 1.0 / schur;
  inv_ = std::move(next);

  rows_.conservativeResize(k + 1, Eigen::NoChange);
  rows_.row(k) = xtilde_row.transpose();
  elbow_.push_back(case_index);
  ++updates_since_refresh_;
  maybe_refresh();
}

void ElbowGramInverse::remove_row(Index position) {
  const Index k = size();
  if (k < 2)
    throw Error(ErrorCode::invalid_argument,
                "gram remove: caller must handle the empty-elbow transition");
  if (position < 0 || position >= k)
    throw Error(ErrorCode::invalid_argument, "gram remove: bad position");

  // Permute the removed row/column to the end, then drop it with the
  // standard block-inverse downdate.
  Matrix perm = inv_;
  if (position < k - 1) {
    // Cyclic shift position..k-1 so `position` ends up last.
    Eigen::VectorXi idx(k);
    for (Index i = 0, j = 0; i < k; ++i)
      if (i != position) idx(j++) = static_cast<int>(i);
    idx(k - 1) = static_cast<int>(position);
    Matrix tmp(k, k);
    for (Index r = 0; r < k; ++r)
      for (Index c = 0; c < k; ++c) tmp(r, c) = perm(idx(r), idx(c));
    perm = std::move(tmp);
  }
  const double d = perm(k - 1, k - 1);
  const Vector b = perm.topRightCorner(k - 1, 1);
  inv_ = perm.topLeftCorner(k - 1, k - 1) - (b * b.transpose()) / d;

  for (Index i = position; i < k - 1; ++i) rows_.row(i) = rows_.row(i + 1);
  rows_.conservativeResize(k - 1, Eigen::NoChange);
  elbow_.erase(elbow_.begin() + position);
  ++updates_since_refresh_;
  maybe_refresh();
}

void ElbowGramInverse::refresh() {
  const Matrix gram = rows_ * rows_.transpose();
  inv_ = gram.llt().solve(Matrix::Identity(gram.rows(), gram.cols()));
  inv_ = 0.5 * (inv_ + inv_.transpose()).eval();
  updates_since_refresh_ = 0;
}

double ElbowGramInverse::self_check() const {
  const Matrix gram = rows_ * rows_.transpose();
  const Index k = size();
  return (inv_ * gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
}

Index ElbowGramInverse::position_of(Index case_index) const {
  for (std::size_t j = 0; j < elbow_.size(); ++j)
    if (elbow_[j] == case_index) return static_cast<Index>(j);
  return -1;
}

void ElbowGramInverse::maybe_refresh() {
  if (updates_since_refresh_ >= kRefreshEvery ||
      (updates_since_refresh_ % 16 == 0 && self_check() > kDriftTol))
    refresh();
}

ElbowGramInverse gram_inverse_init(const Matrix& xtilde_rows,
                                   std::vector<Index> elbow) {
  return ElbowGramInverse::init(xtilde_rows, std::move(elbow));
}

ElbowGramInverse gram_inverse_add(const ElbowGramInverse& g,
                                  const Vector& new_row, Index case_index) {
  ElbowGramInverse out = g;
  out.add_row(new_row, case_index);
  return out;
}

ElbowGramInverse gram_inverse_remove(const ElbowGramInverse& g,
                                     Index position) {
  ElbowGramInverse out = g;
  out.remove_row(position);
  return out;
}

}  // namespace qrrp
