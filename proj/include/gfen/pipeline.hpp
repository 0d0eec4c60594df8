#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gfen/correlation.hpp"
#include "gfen/data_io.hpp"
#include "gfen/edc.hpp"
#include "gfen/fusion.hpp"
#include "gfen/model.hpp"
#include "gfen/periodicity.hpp"

namespace gfen {

/// Which of the two techniques feed the GCN+GRU predictor.
struct Variant {
  bool fusion = true;  // fused, topology-masked graph instead of the plain adjacency
  bool edc = true;     // smoothed input X~ + B instead of the normalized series

  std::string name() const {
    if (fusion && edc) return "GFEN";
    if (fusion) return "GCN+GRU+TSTGF";
    if (edc) return "GCN+GRU+EDC";
    return "GCN+GRU";
  }
  bool operator==(const Variant&) const = default;
};

inline constexpr Variant kBaseVariant{false, false};
inline constexpr Variant kFusionVariant{true, false};
inline constexpr Variant kEdcVariant{false, true};
inline constexpr Variant kFullVariant{true, true};

struct PipelineOptions {
  double train_ratio = 0.8;
  Index order = 1;           // difference order k
  Index input_length = 12;   // L
  Index horizon = 1;         // P
  Index window_start = 0;    // c
  ReductionMode reduction = ReductionMode::spectral;
  std::uint64_t seed = 0;
  std::optional<Index> period;  // skip the spectral estimate when set
};

/// Graphs learned from the training split.
struct GraphBundle {
  PeriodEstimate period;
  Index period_steps = 0;
  RawCorrelationMatrix spatial_raw;
  RawCorrelationMatrix temporal_raw;
  Matrix spatial;   // GS
  Matrix temporal;  // GT
};

inline GraphBundle build_graphs(const SpeedMatrix& train, const PipelineOptions& opts) {
  GraphBundle g;
  const DifferencedSeries diff = kth_difference(train.values, opts.order);
  if (opts.period) {
    g.period_steps = *opts.period;
  } else {
    g.period = dominant_period(aggregate_series(diff.values));
    g.period_steps = g.period.period_steps;
  }
  const Index ts = std::min(g.period_steps, diff.values.cols() - opts.window_start);
  const Index n = train.sensors();
  g.spatial_raw = spatial_correlation(train, opts.window_start, ts);
  g.spatial = row_softmax(g.spatial_raw.values);
  g.temporal_raw = temporal_correlation(diff.values, opts.window_start, ts);
  if (ts < n)
    throw DimensionError("period " + std::to_string(ts) + " is shorter than N=" + std::to_string(n) +
                         "; temporal graph cannot be reduced");
  g.temporal = row_softmax(reduce_temporal_graph(g.temporal_raw.values, n, opts.reduction, opts.seed));
  return g;
}

/// Everything fixed for a training run: normalized series, frozen graphs, window starts.
/// Window start s reads model-input columns [s, s+L) and predicts series columns [s+L, s+L+P).
struct Problem {
  Matrix series;
  Matrix adjacency;
  Matrix spatial;
  Matrix temporal;
  DifferencedSeries differenced;
  Matrix residual;
  Variant variant;
  Index input_length = 12;
  Index horizon = 1;
  Index train_steps = 0;
  std::vector<Index> train_starts;
  std::vector<Index> test_starts;
  ScaleRecord scale;

  Index nodes() const { return series.rows(); }
  Index order() const { return differenced.order; }
};

/// Assembles a problem from normalized data and prebuilt graphs. Train windows start at k
/// (so every variant sees the same windows) and end inside [0, train_steps); test windows
/// lie entirely in [train_steps, T).
inline Problem assemble_problem(Matrix normalized, Matrix adjacency, Matrix spatial, Matrix temporal,
                                Index train_steps, Variant variant, Index order, Index input_length,
                                Index horizon) {
  Problem p;
  const Index n = normalized.rows();
  require_shape(adjacency, n, n, "adjacency");
  require_shape(spatial, n, n, "spatial graph");
  require_shape(temporal, n, n, "temporal graph");
  p.differenced = kth_difference(normalized, order);
  p.residual = nonstationary_residual(normalized, p.differenced);
  p.series = std::move(normalized);
  p.adjacency = std::move(adjacency);
  p.spatial = std::move(spatial);
  p.temporal = std::move(temporal);
  p.variant = variant;
  p.input_length = input_length;
  p.horizon = horizon;
  p.train_steps = train_steps;
  const Index span = input_length + horizon;
  for (Index s = order; s + span <= train_steps; ++s) p.train_starts.push_back(s);
  for (Index s = train_steps; s + span <= p.series.cols(); ++s) p.test_starts.push_back(s);
  if (p.train_starts.empty())
    throw InsufficientDataError("no training windows: train split has " + std::to_string(train_steps) +
                                " steps, need more than k+L+P=" + std::to_string(order + span));
  return p;
}

inline Problem make_problem(const SpeedMatrix& raw, const AdjacencyMatrix& adjacency, const GraphBundle& graphs,
                            const PipelineOptions& opts, Variant variant) {
  if (adjacency.nodes() != raw.sensors())
    throw DimensionError("adjacency has " + std::to_string(adjacency.nodes()) + " nodes, data has " +
                         std::to_string(raw.sensors()) + " sensors");
  auto [train, test] = split_train_test(raw, opts.train_ratio);
  const ScaleRecord scale = fit_min_max(train.values);
  Problem p = assemble_problem(scale.normalize(raw.values), adjacency.values, graphs.spatial, graphs.temporal,
                               train.steps(), variant, opts.order, opts.input_length, opts.horizon);
  p.scale = scale;
  return p;
}

/// Order-independent fingerprint of the data split a problem trains and tests on.
inline std::uint64_t split_checksum(const Problem& p) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&](const void* data, std::size_t bytes) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(&p.train_steps, sizeof(p.train_steps));
  mix(p.train_starts.data(), p.train_starts.size() * sizeof(Index));
  mix(p.test_starts.data(), p.test_starts.size() * sizeof(Index));
  mix(p.series.data(), static_cast<std::size_t>(p.series.size()) * sizeof(double));
  return h;
}

/// Quantities recomputed from the gate and attention parameters once per epoch.
struct EpochContext {
  Matrix graph;       // TG, or the adjacency without fusion
  Matrix gate;        // z
  Matrix propagator;  // S~
  ScoreMatrix scores;
  Matrix inputs;      // N x T model input aligned with `series`
};

inline EpochContext prepare_epoch(const Problem& p, const ModelParams& params) {
  EpochContext ctx;
  if (p.variant.fusion) {
    const FusedGraph fused = gated_fuse(p.spatial, p.temporal, params.gate, &ctx.gate);
    ctx.graph = topology_mask(fused, p.adjacency).values;
  } else {
    ctx.graph = p.adjacency;
  }
  ctx.propagator = normalize_propagator(ctx.graph).values;
  if (p.variant.edc) {
    const Index k = p.order();
    ctx.scores = attention_scores(p.spatial, params.attn);
    ctx.inputs = Matrix::Zero(p.series.rows(), p.series.cols());
    ctx.inputs.rightCols(p.series.cols() - k) = smoothed_input(p.differenced, compute_bias(p.residual, ctx.scores.values));
  } else {
    ctx.inputs = p.series;
  }
  return ctx;
}

/// Adds gate and attention gradients given dL/dS~ and dL/d(model inputs).
inline void context_backward(const Problem& p, const EpochContext& ctx, const ModelParams& params,
                             const Matrix& grad_propagator, const Matrix& grad_inputs, ModelParams& grads) {
  if (p.variant.fusion) {
    const Matrix dgraph = propagator_backward(ctx.graph, ctx.propagator, grad_propagator);
    const Matrix dfused = dgraph.cwiseProduct((p.adjacency.array() != 0.0).cast<double>().matrix());
    GateParams g = gated_fuse_backward(p.spatial, p.temporal, ctx.gate, dfused);
    grads.gate.w_spatial += g.w_spatial;
    grads.gate.w_temporal += g.w_temporal;
    grads.gate.bias += g.bias;
  }
  if (p.variant.edc) {
    const Index k = p.order();
    const Matrix dscores = grad_inputs.rightCols(p.series.cols() - k) * p.residual.transpose();
    AttnParams a = attention_backward(p.spatial, params.attn, ctx.scores, dscores);
    grads.attn.query += a.query;
    grads.attn.key += a.key;
    grads.attn.value += a.value;
  }
}

/// Dropout-free prediction for the window starting at s. With EDC the residual path reads the
/// last observed speed, since X~ + B carries no per-sensor level of its own.
inline Matrix window_prediction(const Problem& p, const EpochContext& ctx, const ModelParams& params, Index s) {
  const Matrix window = ctx.inputs.middleCols(s, p.input_length);
  if (!p.variant.edc) return forward(window, ctx.propagator, params);
  const Matrix last = p.series.col(s + p.input_length - 1);
  return forward(window, ctx.propagator, params, 0.0, nullptr, nullptr, &last);
}

struct BatchResult {
  double loss = 0.0;
  double squared_error = 0.0;
  std::size_t values = 0;
};

/// Loss ||E||_F + lambda ||theta||^2 over the windows in `starts` (E stacks every window's
/// error) and its gradient for every parameter group, written to `grads`.
///
/// The backward pass is linear in dL/dpred, so each window is backpropagated with its raw
/// error right after its forward pass and the sum is scaled by 1/||E||_F at the end.
inline BatchResult batch_gradient(const Problem& p, const EpochContext& ctx, const ModelParams& params,
                                  std::span<const Index> starts, double lambda, double dropout,
                                  std::mt19937_64* rng, ModelParams& grads) {
  const Index n = p.nodes(), len = p.input_length, hz = p.horizon;
  grads = params.zeros_like();
  Matrix dprop = Matrix::Zero(n, n);
  Matrix dinputs = Matrix::Zero(n, p.series.cols());
  Matrix dwindow(n, len);
  WindowCache cache;
  BatchResult r;
  for (Index s : starts) {
    const Matrix last = p.series.col(s + len - 1);
    const Matrix pred = forward(ctx.inputs.middleCols(s, len), ctx.propagator, params, dropout, rng, &cache,
                                p.variant.edc ? &last : nullptr);
    const Matrix err = pred - p.series.middleCols(s + len, hz);
    r.squared_error += err.squaredNorm();
    r.values += static_cast<std::size_t>(err.size());
    dwindow.setZero();
    backward(ctx.propagator, params, cache, err, grads, dprop, dwindow);
    dinputs.middleCols(s, len) += dwindow;
  }
  const double norm = std::sqrt(r.squared_error);
  if (norm > 0.0) {
    const double inv = 1.0 / norm;
    for (Matrix* g : grads.tensors()) *g *= inv;
    dprop *= inv;
    dinputs *= inv;
  }
  context_backward(p, ctx, params, dprop, dinputs, grads);
  auto g = grads.tensors();
  const auto w = params.tensors();
  for (std::size_t i = 0; i < g.size(); ++i) *g[i] += 2.0 * lambda * *w[i];
  r.loss = norm + lambda * params.squared_norm();
  return r;
}

/// Loss of `params` over `starts` with the context rebuilt from scratch (no dropout).
inline double full_loss(const Problem& p, const ModelParams& params, std::span<const Index> starts, double lambda) {
  const EpochContext ctx = prepare_epoch(p, params);
  double sq = 0.0;
  for (Index s : starts) sq += (window_prediction(p, ctx, params, s) - p.series.middleCols(s + p.input_length, p.horizon)).squaredNorm();
  return std::sqrt(sq) + lambda * params.squared_norm();
}

/// Normalized-unit predictions, one N x P matrix per window start.
inline std::vector<Matrix> predict(const Problem& p, const ModelParams& params, std::span<const Index> starts) {
  const EpochContext ctx = prepare_epoch(p, params);
  std::vector<Matrix> out;
  out.reserve(starts.size());
  for (Index s : starts) out.push_back(window_prediction(p, ctx, params, s));
  return out;
}

}  // namespace gfen
