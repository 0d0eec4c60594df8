#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfen/data_io.hpp"
#include "gfen/types.hpp"
#include "gfen/umap.hpp"

namespace gfen {

enum class CorrelationKind { spatial, temporal };
enum class ReductionMode { spectral, umap };

/// Pearson correlations over one window; N x N (spatial) or T_s x T_s (temporal).
struct RawCorrelationMatrix {
  Matrix values;
  CorrelationKind kind = CorrelationKind::spatial;
  Index window_start = 0;
  Index window_length = 0;
};

/// Row-stochastic, strictly positive N x N graph.
struct CorrelationGraph {
  Matrix values;
  CorrelationKind kind = CorrelationKind::spatial;
};

/// Population mean and variance (divides by the length).
inline std::pair<double, double> mean_and_variance(std::span<const double> series) {
  if (series.empty()) throw ArgumentError("mean/variance of an empty series");
  const auto n = static_cast<double>(series.size());
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : series) ss += (v - mean) * (v - mean);
  return {mean, ss / n};
}

inline Matrix row_softmax(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    out.row(i) = (m.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

namespace detail {

constexpr double kMinVariance = 1e-12;

/// Correlation between the rows of `series` (each row one variable, columns observations).
/// Returns the index of the first degenerate row through `degenerate` instead of dividing by 0.
inline Matrix pearson_rows(const Matrix& series, Index& degenerate) {
  const Index n = series.rows();
  const auto len = static_cast<double>(series.cols());
  Matrix centered = series.colwise() - series.rowwise().mean();
  Vector var = centered.rowwise().squaredNorm() / len;
  degenerate = -1;
  for (Index i = 0; i < n; ++i) {
    if (!(var(i) > kMinVariance)) {
      degenerate = i;
      return {};
    }
  }
  Matrix cov = centered * centered.transpose() / len;
  Matrix corr(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      corr(i, j) = i == j ? 1.0 : std::clamp(cov(i, j) / std::sqrt(var(i) * var(j)), -1.0, 1.0);
    }
  }
  return corr;
}

}  // namespace detail

/// Sensor-by-sensor correlation over columns [start, start+length) of the raw observations.
inline RawCorrelationMatrix spatial_correlation(const SpeedMatrix& x, Index start, Index length) {
  if (start < 0 || length < 2 || start + length > x.steps())
    throw ArgumentError("spatial window [" + std::to_string(start) + ", " + std::to_string(start + length) +
                        ") does not fit T=" + std::to_string(x.steps()));
  Index bad = -1;
  Matrix corr = detail::pearson_rows(x.values.middleCols(start, length), bad);
  if (bad >= 0) {
    const std::string id = static_cast<std::size_t>(bad) < x.sensor_ids.size()
                               ? x.sensor_ids[static_cast<std::size_t>(bad)]
                               : std::to_string(bad);
    throw DegenerateError("sensor " + id + " (row " + std::to_string(bad) + ") has zero variance in the window");
  }
  return {std::move(corr), CorrelationKind::spatial, start, length};
}

inline CorrelationGraph spatial_graph(const SpeedMatrix& x, Index start, Index length) {
  return {row_softmax(spatial_correlation(x, start, length).values), CorrelationKind::spatial};
}

/// Step-by-step correlation of the differenced columns in [start, start+length).
inline RawCorrelationMatrix temporal_correlation(const Matrix& differenced, Index start, Index length) {
  if (start < 0 || length < 2 || start + length > differenced.cols())
    throw ArgumentError("temporal window [" + std::to_string(start) + ", " + std::to_string(start + length) +
                        ") does not fit T-k=" + std::to_string(differenced.cols()));
  Index bad = -1;
  Matrix corr = detail::pearson_rows(differenced.middleCols(start, length).transpose(), bad);
  if (bad >= 0)
    throw DegenerateError("time step " + std::to_string(start + bad) + " has zero variance across sensors");
  return {std::move(corr), CorrelationKind::temporal, start, length};
}

/// Shrinks a T_s x T_s temporal correlation to N x N.
///
/// spectral: U^T G U with U the eigenvectors of the N largest eigenvalues (a diagonal of those
/// eigenvalues). umap: embed the T_s rows into N dimensions, then embed the N columns of that
/// result into N dimensions. T_s == N passes the input through untouched in both modes.
inline Matrix reduce_temporal_graph(const Matrix& graph, Index target, ReductionMode mode = ReductionMode::spectral,
                                    std::uint64_t seed = 0) {
  if (graph.rows() != graph.cols()) throw DimensionError("temporal graph must be square, got " + shape_of(graph));
  const Index ts = graph.rows();
  if (target < 1 || ts < target)
    throw DimensionError("cannot reduce a " + shape_of(graph) + " graph to " + std::to_string(target) + " nodes");
  if (ts == target) return graph;

  if (mode == ReductionMode::spectral) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (graph + graph.transpose()));
    // Eigenvalues come back ascending; keep the top `target`, largest first.
    Matrix basis = eig.eigenvectors().rightCols(target).rowwise().reverse();
    return basis.transpose() * graph * basis;
  }

  UmapOptions opts;
  opts.n_components = static_cast<int>(target);
  opts.seed = seed;
  Matrix first = umap_embed(graph, opts);  // T_s x N
  opts.seed = seed + 1;
  return umap_embed(Matrix(first.transpose()), opts);  // N x N
}

inline CorrelationGraph temporal_graph(const Matrix& differenced, Index start, Index length, Index nodes,
                                       ReductionMode mode = ReductionMode::spectral, std::uint64_t seed = 0) {
  if (length < nodes)
    throw DimensionError("period " + std::to_string(length) + " is shorter than N=" + std::to_string(nodes) +
                         "; temporal graph cannot be reduced");
  auto raw = temporal_correlation(differenced, start, length);
  return {row_softmax(reduce_temporal_graph(raw.values, nodes, mode, seed)), CorrelationKind::temporal};
}

}  // namespace gfen
