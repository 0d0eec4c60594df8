#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gfen/training.hpp"

namespace gfen {

struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  double acc = 0.0;
  double r2 = 0.0;
  double var = 0.0;
  std::size_t n_points = 0;
};

/// Metrics over every cell of two equally shaped matrices (rows = samples, columns = sensors).
/// R^2 and VAR use the grand mean / population variance over all cells.
inline MetricsReport compute_metrics(const Matrix& y, const Matrix& pred) {
  if (y.size() == 0) throw ArgumentError("metrics need at least one value");
  require_same_shape(y, pred, "prediction");
  const auto n = static_cast<double>(y.size());
  const Matrix e = y - pred;
  MetricsReport m;
  m.n_points = static_cast<std::size_t>(y.size());
  m.rmse = std::sqrt(e.squaredNorm() / n);
  m.mae = e.cwiseAbs().sum() / n;
  const double ynorm = y.norm();
  if (ynorm == 0.0) throw DegenerateError("accuracy undefined: ||Y||_F = 0");
  m.acc = 1.0 - e.norm() / ynorm;
  const double ymean = y.mean();
  const double sst = (y.array() - ymean).square().sum();
  if (sst == 0.0) throw DegenerateError("R^2 and explained variance undefined: Y has zero variance");
  m.r2 = 1.0 - e.squaredNorm() / sst;
  const double emean = e.mean();
  m.var = 1.0 - (e.array() - emean).square().sum() / sst;
  return m;
}

enum class NoiseKind { gaussian, poisson };

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "poisson") return NoiseKind::poisson;
  throw ArgumentError("unknown noise kind '" + s + "' (expected gaussian or poisson)");
}

inline const char* to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "poisson"; }

/// Noise levels of the standard robustness sweep.
inline std::vector<double> standard_noise_levels(NoiseKind k) {
  if (k == NoiseKind::gaussian) return {0.2, 0.4, 0.8, 1.0, 2.0};
  return {1.0, 2.0, 4.0, 8.0, 16.0};
}

inline bool is_standard_noise_level(NoiseKind k, double param) {
  for (double v : standard_noise_levels(k))
    if (v == param) return true;
  return false;
}

/// Raw noise draw (before normalization) from the "noise" stream, column-major order.
inline Matrix draw_noise(Index rows, Index cols, NoiseKind kind, double param, std::uint64_t seed) {
  if (!(param >= 0.0) || !std::isfinite(param))
    throw ArgumentError(std::string(to_string(kind)) + " noise parameter must be finite and >= 0");
  Matrix noise = Matrix::Zero(rows, cols);
  if (param == 0.0) return noise;
  auto rng = make_stream(seed, "noise");
  if (kind == NoiseKind::gaussian) {
    std::normal_distribution<double> d(0.0, param);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) noise(i, j) = d(rng);
  } else {
    std::poisson_distribution<long> d(param);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) noise(i, j) = static_cast<double>(d(rng));
  }
  return noise;
}

/// X + (noise rescaled to [0,1]). A constant noise draw rescales to nothing and adds zero.
inline Matrix add_noise(const Matrix& x, NoiseKind kind, double param, std::uint64_t seed) {
  Matrix noise = draw_noise(x.rows(), x.cols(), kind, param, seed);
  const double lo = noise.minCoeff(), hi = noise.maxCoeff();
  if (!(hi > lo)) return x;
  return x + ((noise.array() - lo) / (hi - lo)).matrix();
}

inline SpeedMatrix add_noise(const SpeedMatrix& x, NoiseKind kind, double param, std::uint64_t seed) {
  SpeedMatrix out = x;
  out.values = add_noise(x.values, kind, param, seed);
  return out;
}

/// Per-sensor mean of the training values at each phase t mod T_s, evaluated at absolute
/// time steps `steps`. Returns N x |steps|.
inline Matrix historical_average_predict(const Matrix& train, std::optional<Index> period,
                                         std::span<const Index> steps) {
  if (!period || *period < 1) throw StateError("historical average needs a known period");
  const Index ts = *period;
  if (train.cols() < ts)
    throw InsufficientDataError("training span " + std::to_string(train.cols()) + " is shorter than the period " +
                                std::to_string(ts));
  Matrix sums = Matrix::Zero(train.rows(), ts);
  Vector counts = Vector::Zero(ts);
  for (Index t = 0; t < train.cols(); ++t) {
    sums.col(t % ts) += train.col(t);
    counts(t % ts) += 1.0;
  }
  Matrix out(train.rows(), static_cast<Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Index phase = steps[i] % ts;
    out.col(static_cast<Index>(i)) = sums.col(phase) / counts(phase);
  }
  return out;
}

/// Raw-unit ground truth and predictions for a set of windows, one row per (window, horizon step).
struct Evaluation {
  Matrix truth;
  Matrix prediction;
  MetricsReport metrics;
};

/// Runs the model on `inputs`' windows and scores against `targets`' series (both normalized
/// problems on the same scale). Passing the same problem twice is the usual evaluation; a
/// noisy `inputs` with clean `targets` is the robustness protocol.
inline Evaluation evaluate(const Problem& inputs, const Problem& targets, const ModelParams& params,
                           std::span<const Index> starts) {
  if (starts.empty()) throw InsufficientDataError("no windows to evaluate");
  require_same_shape(inputs.series, targets.series, "target series");
  const Index n = inputs.nodes(), hz = inputs.horizon;
  const auto preds = predict(inputs, params, starts);
  const auto rows = static_cast<Index>(starts.size()) * hz;
  Evaluation e;
  e.truth.resize(rows, n);
  e.prediction.resize(rows, n);
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const Index s = starts[w];
    for (Index h = 0; h < hz; ++h) {
      const Index r = static_cast<Index>(w) * hz + h;
      e.prediction.row(r) = preds[w].col(h).transpose();
      e.truth.row(r) = targets.series.col(s + inputs.input_length + h).transpose();
    }
  }
  e.truth = targets.scale.denormalize(e.truth);
  e.prediction = targets.scale.denormalize(e.prediction);
  e.metrics = compute_metrics(e.truth, e.prediction);
  return e;
}

inline Evaluation evaluate(const Problem& p, const ModelParams& params) {
  return evaluate(p, p, params, p.test_starts);
}

/// Same graphs, windows and scale as `p`, on a different (already normalized) series.
inline Problem with_series(const Problem& p, Matrix normalized) {
  Problem q = assemble_problem(std::move(normalized), p.adjacency, p.spatial, p.temporal, p.train_steps, p.variant,
                               p.order(), p.input_length, p.horizon);
  q.scale = p.scale;
  return q;
}

struct RobustnessRow {
  std::string kind;  // "none" for the noiseless reference
  double param = 0.0;
  MetricsReport metrics;
};

/// Evaluates a trained model on test windows whose inputs carry added noise; targets stay clean.
/// The first row is the noiseless reference.
inline std::vector<RobustnessRow> run_robustness(const Problem& p, const ModelParams& params, const Matrix& raw,
                                                 const std::vector<std::pair<NoiseKind, double>>& settings,
                                                 std::uint64_t seed) {
  require_same_shape(p.series, raw, "raw series");
  std::vector<RobustnessRow> rows;
  rows.push_back({"none", 0.0, evaluate(p, params).metrics});
  for (const auto& [kind, param] : settings) {
    const Problem noisy = with_series(p, p.scale.normalize(add_noise(raw, kind, param, seed)));
    rows.push_back({to_string(kind), param, evaluate(noisy, p, params, p.test_starts).metrics});
  }
  return rows;
}

struct AblationRow {
  std::string variant;
  double rmse = 0.0;
  double mae = 0.0;
  std::uint64_t split_checksum = 0;
  std::optional<Index> convergence_epoch;
  Index epochs = 0;
};

/// Trains and scores the four variants (base, +fusion, +EDC, full) with one shared config and seed.
inline std::vector<AblationRow> run_ablation(const SpeedMatrix& raw, const AdjacencyMatrix& adjacency,
                                             const TrainConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  const PipelineOptions opts = cfg.pipeline();
  const auto [train, test] = split_train_test(raw, opts.train_ratio);
  const GraphBundle graphs = build_graphs(train, opts);
  std::vector<AblationRow> rows;
  for (Variant v : {kBaseVariant, kFusionVariant, kEdcVariant, kFullVariant}) {
    const Problem p = make_problem(raw, adjacency, graphs, opts, v);
    const FitResult fr = fit(p, cfg, observer);
    const Evaluation e = evaluate(p, fr.params);
    rows.push_back({v.name(), e.metrics.rmse, e.metrics.mae, split_checksum(p), fr.trace.convergence_epoch,
                    static_cast<Index>(fr.trace.epochs.size())});
  }
  return rows;
}

}  // namespace gfen
