#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "gfen/correlation.hpp"
#include "gfen/types.hpp"

namespace gfen {

/// Lag-k differences, N x (T-k), with the first k source columns kept for reconstruction.
struct DifferencedSeries {
  Matrix values;
  Index order = 1;
  std::optional<Matrix> head;
};

inline DifferencedSeries kth_difference(const Matrix& x, Index k) {
  if (k < 1 || k >= x.cols())
    throw ArgumentError("difference order k=" + std::to_string(k) + " must satisfy 1 <= k < T=" +
                        std::to_string(x.cols()));
  const Index len = x.cols() - k;
  return {x.rightCols(len) - x.leftCols(len), k, Matrix(x.leftCols(k))};
}

/// Rebuilds the source by cumulative lag-k sums from the retained head.
inline Matrix inverse_difference(const DifferencedSeries& d) {
  if (!d.head) throw StateError("differenced series has no head; cannot reconstruct");
  const Index k = d.order;
  require_shape(*d.head, d.values.rows(), k, "difference head");
  Matrix x(d.values.rows(), d.values.cols() + k);
  x.leftCols(k) = *d.head;
  for (Index t = 0; t < d.values.cols(); ++t) x.col(t + k) = x.col(t) + d.values.col(t);
  return x;
}

/// X[:, k:T] - X~; algebraically the lag-k past values X[:, 0:T-k].
inline Matrix nonstationary_residual(const Matrix& x, const DifferencedSeries& d) {
  if (x.rows() != d.values.rows() || x.cols() != d.values.cols() + d.order)
    throw DimensionError("residual: source " + shape_of(x) + " does not match order-" + std::to_string(d.order) +
                         " difference " + shape_of(d.values));
  return x.rightCols(d.values.cols()) - d.values;
}

/// Query/key/value projections of the spatial graph, each N x N.
struct AttnParams {
  Matrix query;
  Matrix key;
  Matrix value;

  static AttnParams zeros(Index n) { return {Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)}; }
};

/// SC together with the row-softmaxed attention weights it was built from.
struct ScoreMatrix {
  Matrix values;
  Matrix weights;
};

/// SC = softmax((Wq GS)(Wk GS)^T / sqrt(N)) (Wv GS), softmax over rows.
inline ScoreMatrix attention_scores(const Matrix& spatial, const AttnParams& p) {
  const Index n = spatial.rows();
  require_shape(spatial, n, n, "attention input graph");
  require_shape(p.query, n, n, "query weight");
  require_shape(p.key, n, n, "key weight");
  require_shape(p.value, n, n, "value weight");
  const Matrix q = p.query * spatial;
  const Matrix k = p.key * spatial;
  ScoreMatrix sc;
  sc.weights = row_softmax(q * k.transpose() / std::sqrt(static_cast<double>(n)));
  sc.values = sc.weights * (p.value * spatial);
  return sc;
}

/// Parameter gradients from dL/dSC.
inline AttnParams attention_backward(const Matrix& spatial, const AttnParams& p, const ScoreMatrix& sc,
                                     const Matrix& grad_scores) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(spatial.rows()));
  const Matrix q = p.query * spatial;
  const Matrix k = p.key * spatial;
  const Matrix v = p.value * spatial;
  const Matrix dweights = grad_scores * v.transpose();
  const Matrix dv = sc.weights.transpose() * grad_scores;
  Matrix dlogits = sc.weights.cwiseProduct(dweights);
  const Vector row_dot = dlogits.rowwise().sum();
  dlogits -= sc.weights.cwiseProduct(row_dot.replicate(1, sc.weights.cols()));
  const Matrix dq = dlogits * k * scale;
  const Matrix dk = dlogits.transpose() * q * scale;
  return {dq * spatial.transpose(), dk * spatial.transpose(), dv * spatial.transpose()};
}

/// B = SC X^: each sensor's bias mixes every sensor's residual at the same step.
inline Matrix compute_bias(const Matrix& residual, const Matrix& scores) {
  if (scores.rows() != scores.cols() || scores.cols() != residual.rows())
    throw DimensionError("bias: scores " + shape_of(scores) + " incompatible with residual " + shape_of(residual));
  return scores * residual;
}

/// X^in = X~ + B.
inline Matrix smoothed_input(const DifferencedSeries& d, const Matrix& bias) {
  require_same_shape(d.values, bias, "smoothed input bias");
  return d.values + bias;
}

}  // namespace gfen
