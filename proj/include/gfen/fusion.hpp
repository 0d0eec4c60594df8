#pragma once

#include "gfen/correlation.hpp"
#include "gfen/data_io.hpp"
#include "gfen/types.hpp"

namespace gfen {

/// Learnable gate z = sigmoid(GS W_spatial + GT W_temporal + bias); all N x N.
struct GateParams {
  Matrix w_spatial;
  Matrix w_temporal;
  Matrix bias;

  static GateParams zeros(Index n) { return {Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)}; }
};

struct FusedGraph {
  Matrix values;
  bool masked = false;
};

/// GST = z .* GS + (1 - z) .* GT. `gate_out`, when given, receives z for the backward pass.
inline FusedGraph gated_fuse(const Matrix& spatial, const Matrix& temporal, const GateParams& params,
                             Matrix* gate_out = nullptr) {
  const Index n = spatial.rows();
  require_shape(spatial, n, n, "spatial graph");
  require_shape(temporal, n, n, "temporal graph");
  require_shape(params.w_spatial, n, n, "gate spatial weight");
  require_shape(params.w_temporal, n, n, "gate temporal weight");
  require_shape(params.bias, n, n, "gate bias");
  Matrix z = sigmoid(Matrix(spatial * params.w_spatial + temporal * params.w_temporal + params.bias));
  FusedGraph out{z.cwiseProduct(spatial) + (Matrix::Ones(n, n) - z).cwiseProduct(temporal), false};
  if (gate_out) *gate_out = std::move(z);
  return out;
}

inline FusedGraph gated_fuse(const CorrelationGraph& spatial, const CorrelationGraph& temporal,
                             const GateParams& params) {
  return gated_fuse(spatial.values, temporal.values, params);
}

/// Keeps GST where the road network has an edge, zero elsewhere (including the diagonal).
inline FusedGraph topology_mask(const FusedGraph& fused, const Matrix& adjacency) {
  require_same_shape(fused.values, adjacency, "topology mask");
  return {fused.values.cwiseProduct((adjacency.array() != 0.0).cast<double>().matrix()), true};
}

inline FusedGraph topology_mask(const FusedGraph& fused, const AdjacencyMatrix& adjacency) {
  return topology_mask(fused, adjacency.values);
}

/// Gradients of the gate parameters given dL/dGST and the cached gate activations z.
inline GateParams gated_fuse_backward(const Matrix& spatial, const Matrix& temporal, const Matrix& z,
                                      const Matrix& grad_fused) {
  Matrix dpre = grad_fused.cwiseProduct(spatial - temporal).cwiseProduct(z).cwiseProduct(
      (Matrix::Ones(z.rows(), z.cols()) - z));
  return {spatial.transpose() * dpre, temporal.transpose() * dpre, dpre};
}

}  // namespace gfen
