#ifndef CRFORGE_EMBEDDING_HPP_
#define CRFORGE_EMBEDDING_HPP_

#include <Eigen/Core>
#include <cmath>

#include "crforge/errors.hpp"

namespace crforge {

// Projected representation; the currency of the losses and memory banks.
using EmbeddingVector = Eigen::VectorXd;

constexpr double kNormTolerance = 1e-5;

// Unit-normalizes v. A zero vector is returned unchanged and reported
// through `degenerate` instead of dividing by zero.
inline EmbeddingVector normalize_or_zero(const EmbeddingVector& v, bool* degenerate = nullptr) {
  const double n = v.norm();
  if (n == 0.0) {
    if (degenerate) *degenerate = true;
    return v;
  }
  if (degenerate) *degenerate = false;
  return v / n;
}

inline EmbeddingVector normalized(const EmbeddingVector& v) {
  bool degenerate = false;
  EmbeddingVector out = normalize_or_zero(v, &degenerate);
  if (degenerate) throw DegenerateInput("cannot normalize a zero embedding");
  return out;
}

// Row-wise unit normalization of a (n x d) matrix; zero rows throw.
inline Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0.0) throw DegenerateInput("cannot normalize a zero embedding row");
    out.row(i) = m.row(i) / n;
  }
  return out;
}

}  // namespace crforge

#endif  // CRFORGE_EMBEDDING_HPP_
