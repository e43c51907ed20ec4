#pragma once

#include "qrrp/types.hpp"

namespace qrrp {

/// Maintains (Xt_E Xt_E')^{-1} for the ordered elbow sequence E, with O(|E|^2)
/// rank-one up/downdates. Rows of the expanded design for the current elbow
/// are kept alongside so the inverse can be refactorized when update drift
/// accumulates. Additions append, removals compact; the ordering is part of
/// the state so paths are reproducible.
class ElbowGramInverse {
 public:
  ElbowGramInverse() = default;

  /// Fresh inverse from the elbow rows of the expanded design (one row per
  /// elbow case, in order). Throws singular_elbow if the Gram has condition
  /// number above 1e12 (general position violated).
  static ElbowGramInverse init(const Matrix& xtilde_rows,
                               std::vector<Index> elbow);

  /// Convenience: gathers rows `elbow` of a full expanded design.
  static ElbowGramInverse from_design(const Matrix& xtilde,
                                      const std::vector<Index>& elbow);

  /// Appends one case via the block/Sherman-Morrison identity.
  void add_row(const Vector& xtilde_row, Index case_index);

  /// Removes the case at `position` in the elbow sequence; |E| >= 2 required.
  void remove_row(Index position);

  /// Recomputes the inverse from the stored rows.
  void refresh();

  /// ||inv * Gram - I||_inf; refactorizes when this drifts.
  double self_check() const;

  Index size() const { return static_cast<Index>(elbow_.size()); }
  const Matrix& inv() const { return inv_; }
  const std::vector<Index>& elbow() const { return elbow_; }
  const Matrix& rows() const { return rows_; }
  Index position_of(Index case_index) const;

  /// Number of rank-one updates since the last refactorization.
  int updates_since_refresh() const { return updates_since_refresh_; }

 private:
  Matrix inv_;   // |E| x |E|
  Matrix rows_;  // |E| x (p+1), elbow rows of the expanded design
  std::vector<Index> elbow_;
  int updates_since_refresh_ = 0;

  // Rank-one updates accumulate roundoff; refactorize after this many.
  static constexpr int kRefreshEvery = 64;
  static constexpr double kDriftTol = 1e-8;

  void maybe_refresh();
};

// Value-returning wrappers matching the operation contracts.
ElbowGramInverse gram_inverse_init(const Matrix& xtilde_rows,
                                   std::vector<Index> elbow);
ElbowGramInverse gram_inverse_add(const ElbowGramInverse& g,
                                  const Vector& new_row, Index case_index);
ElbowGramInverse gram_inverse_remove(const ElbowGramInverse& g,
                                     Index position);

}  // namespace qrrp
