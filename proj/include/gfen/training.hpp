#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gfen/pipeline.hpp"

namespace gfen {

/// Hyperparameters plus the pipeline settings a run depends on. Persisted as flat key=value text.
struct TrainConfig {
  Index batch_size = 33;
  Index hidden_units = 64;
  double learning_rate = 0.01;
  Index gcn_layers = 2;
  Index gru_layers = 3;
  double dropout = 0.2;
  Index k = 1;
  double lambda = 1.5e-3;
  Index max_epochs = 300;
  std::uint64_t seed = 0;
  Index input_length = 12;
  Index horizon = 1;
  bool stop_at_convergence = true;
  double train_ratio = 0.8;
  Index window_start = 0;
  ReductionMode reduction = ReductionMode::spectral;
  Index period = 0;  // 0 = estimate from the data
  bool fusion = true;
  bool edc = true;

  Variant variant() const { return {fusion, edc}; }

  PipelineOptions pipeline() const {
    PipelineOptions o;
    o.train_ratio = train_ratio;
    o.order = k;
    o.input_length = input_length;
    o.horizon = horizon;
    o.window_start = window_start;
    o.reduction = reduction;
    o.seed = seed;
    if (period > 0) o.period = period;
    return o;
  }

  void validate() const {
    const auto positive = [](Index v, const char* name) {
      if (v < 1) throw ArgumentError(std::string(name) + " must be positive, got " + std::to_string(v));
    };
    positive(batch_size, "batch_size");
    positive(hidden_units, "hidden_units");
    positive(gru_layers, "gru_layers");
    positive(k, "k");
    positive(max_epochs, "max_epochs");
    positive(input_length, "L");
    positive(horizon, "P");
    if (gcn_layers != 2) throw ArgumentError("only the two-layer graph convolution is implemented (gcn_layers=2)");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be >= 0");
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ArgumentError("train_ratio must lie in (0, 1)");
    if (window_start < 0) throw ArgumentError("window_start must be >= 0");
    if (period < 0) throw ArgumentError("period must be >= 0 (0 = estimate)");
  }

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    const auto num = [](double v) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, res.ptr);
    };
    m["batch_size"] = std::to_string(batch_size);
    m["hidden_units"] = std::to_string(hidden_units);
    m["learning_rate"] = num(learning_rate);
    m["gcn_layers"] = std::to_string(gcn_layers);
    m["gru_layers"] = std::to_string(gru_layers);
    m["dropout"] = num(dropout);
    m["k"] = std::to_string(k);
    m["lambda"] = num(lambda);
    m["max_epochs"] = std::to_string(max_epochs);
    m["seed"] = std::to_string(seed);
    m["L"] = std::to_string(input_length);
    m["P"] = std::to_string(horizon);
    m["stop_at_convergence"] = stop_at_convergence ? "true" : "false";
    m["train_ratio"] = num(train_ratio);
    m["window_start"] = std::to_string(window_start);
    m["reduction"] = reduction == ReductionMode::spectral ? "spectral" : "umap";
    m["period"] = std::to_string(period);
    m["fusion"] = fusion ? "true" : "false";
    m["edc"] = edc ? "true" : "false";
    return m;
  }

  /// Applies one key=value setting; unknown keys are an error so typos do not pass silently.
  void set(const std::string& key, const std::string& value) {
    const auto as_index = [&]() -> Index {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ArgumentError("config " + key + ": expected an integer, got '" + value + "'");
      return static_cast<Index>(v);
    };
    const auto as_double = [&]() {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ArgumentError("config " + key + ": expected a number, got '" + value + "'");
      return v;
    };
    const auto as_bool = [&]() {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ArgumentError("config " + key + ": expected true/false, got '" + value + "'");
    };
    if (key == "batch_size") batch_size = as_index();
    else if (key == "hidden_units") hidden_units = as_index();
    else if (key == "learning_rate") learning_rate = as_double();
    else if (key == "gcn_layers") gcn_layers = as_index();
    else if (key == "gru_layers") gru_layers = as_index();
    else if (key == "dropout") dropout = as_double();
    else if (key == "k") k = as_index();
    else if (key == "lambda") lambda = as_double();
    else if (key == "max_epochs") max_epochs = as_index();
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_index());
    else if (key == "L") input_length = as_index();
    else if (key == "P") horizon = as_index();
    else if (key == "stop_at_convergence") stop_at_convergence = as_bool();
    else if (key == "train_ratio") train_ratio = as_double();
    else if (key == "window_start") window_start = as_index();
    else if (key == "period") period = as_index();
    else if (key == "fusion") fusion = as_bool();
    else if (key == "edc") edc = as_bool();
    else if (key == "reduction") {
      if (value == "spectral") reduction = ReductionMode::spectral;
      else if (value == "umap") reduction = ReductionMode::umap;
      else throw ArgumentError("config reduction: expected spectral or umap, got '" + value + "'");
    } else {
      throw ArgumentError("unknown config key '" + key + "'");
    }
  }

  static TrainConfig parse(std::istream& in) {
    TrainConfig c;
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      const std::string key(detail::trim(std::string_view(line).substr(0, eq == std::string::npos ? line.size() : eq)));
      if (key.empty()) continue;
      if (eq == std::string::npos) throw ArgumentError("config line without '=': " + line);
      c.set(key, std::string(detail::trim(std::string_view(line).substr(eq + 1))));
    }
    c.validate();
    return c;
  }

  static TrainConfig load(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return parse(in);
  }

  void save(std::ostream& out) const {
    for (const auto& [key, value] : to_map()) out << key << '=' << value << '\n';
  }
};

/// Adam with bias correction; moment buffers mirror ModelParams.
class Adam {
 public:
  Adam(const ModelParams& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto w = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i]->array() = beta1_ * m[i]->array() + (1.0 - beta1_) * g[i]->array();
      v[i]->array() = beta2_ * v[i]->array() + (1.0 - beta2_) * g[i]->array().square();
      w[i]->array() -= lr_ * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps_);
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ModelParams m_, v_;
};

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

struct EpochRecord {
  Index epoch = 0;     // 1-based
  double loss = 0.0;   // full training-set loss, dropout off, normalized units
  double rmse = 0.0;   // training-set RMSE in raw units
  double rmse3 = 0.0;  // rmse rounded to 3 decimals
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::optional<Index> convergence_epoch;

  void write_csv(std::ostream& out) const {
    out << "epoch,loss,rmse3,seconds\n" << std::setprecision(17);
    for (const auto& e : epochs) out << e.epoch << ',' << e.loss << ',' << std::setprecision(3) << std::fixed << e.rmse3
                                    << std::defaultfloat << std::setprecision(17) << ',' << e.seconds << '\n';
  }
};

/// Earliest 1-based epoch e >= 2 whose 3-decimal RMSE equals epoch e-1's.
inline std::optional<Index> check_convergence(std::span<const double> rmse) {
  for (std::size_t e = 1; e < rmse.size(); ++e)
    if (round3(rmse[e]) == round3(rmse[e - 1])) return static_cast<Index>(e + 1);
  return std::nullopt;
}

inline std::optional<Index> check_convergence(const TrainTrace& trace) {
  std::vector<double> r;
  for (const auto& e : trace.epochs) r.push_back(e.rmse3);
  return check_convergence(r);
}

/// Sum of squared prediction errors (normalized units) over `starts`, dropout off.
inline double squared_error(const Problem& p, const EpochContext& ctx, const ModelParams& params,
                            std::span<const Index> starts) {
  double sq = 0.0;
  for (Index s : starts)
    sq += (window_prediction(p, ctx, params, s) - p.series.middleCols(s + p.input_length, p.horizon)).squaredNorm();
  return sq;
}

/// Initial parameters for a problem. Groups the variant does not use are zero and stay zero
/// (their only gradient is the regularizer's, which vanishes at zero).
inline ModelParams initial_params(const Problem& p, const TrainConfig& cfg) {
  ModelParams params = init_params({p.nodes(), cfg.hidden_units, cfg.horizon, cfg.gru_layers}, cfg.seed);
  if (!p.variant.edc) params.attn = AttnParams::zeros(p.nodes());
  if (!p.variant.fusion) params.gate = GateParams::zeros(p.nodes());
  return params;
}

struct FitResult {
  ModelParams params;
  TrainTrace trace;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

inline FitResult fit(const Problem& p, const TrainConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  if (p.horizon != cfg.horizon || p.input_length != cfg.input_length)
    throw ArgumentError("problem windows (L=" + std::to_string(p.input_length) + ", P=" + std::to_string(p.horizon) +
                        ") do not match config (L=" + std::to_string(cfg.input_length) +
                        ", P=" + std::to_string(cfg.horizon) + ")");
  FitResult r;
  r.params = initial_params(p, cfg);
  Adam adam(r.params, cfg.learning_rate);
  auto shuffle_rng = make_stream(cfg.seed, "shuffle");
  auto dropout_rng = make_stream(cfg.seed, "dropout");
  std::vector<Index> order = p.train_starts;
  ModelParams grads;
  const double range = p.scale.range();
  const auto values = static_cast<double>(p.train_starts.size()) * static_cast<double>(p.nodes() * p.horizon);

  for (Index epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const EpochContext ctx = prepare_epoch(p, r.params);
    std::size_t batch = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const auto len = std::min(order.size() - b, static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Index> starts(order.data() + b, len);
      const BatchResult br = batch_gradient(p, ctx, r.params, starts, cfg.lambda, cfg.dropout, &dropout_rng, grads);
      bool finite = std::isfinite(br.loss);
      for (const Matrix* g : std::as_const(grads).tensors()) finite = finite && g->allFinite();
      if (!finite) throw DivergenceError(static_cast<std::size_t>(epoch), batch + 1);
      adam.step(r.params, grads);
    }
    const EpochContext eval = prepare_epoch(p, r.params);
    const double sq = squared_error(p, eval, r.params, p.train_starts);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = std::sqrt(sq) + cfg.lambda * r.params.squared_norm();
    if (!std::isfinite(rec.loss)) throw DivergenceError(static_cast<std::size_t>(epoch), batch);
    rec.rmse = std::sqrt(sq / values) * range;
    rec.rmse3 = round3(rec.rmse);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.trace.epochs.push_back(rec);
    if (observer) observer(rec);
    if (!r.trace.convergence_epoch && r.trace.epochs.size() >= 2 &&
        r.trace.epochs[r.trace.epochs.size() - 2].rmse3 == rec.rmse3) {
      r.trace.convergence_epoch = epoch;
      if (cfg.stop_at_convergence) break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Gradient verification

struct GroupError {
  ParamGroup group;
  double relative_error = 0.0;  // worst tensor in the group
  std::string worst_tensor;
};

struct GradientReport {
  std::vector<GroupError> groups;
  double tolerance = 1e-4;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(groups.begin(), groups.end(), [&](const GroupError& g) { return g.relative_error < tolerance; });
  }
  const GroupError& group(ParamGroup g) const {
    for (const auto& e : groups)
      if (e.group == g) return e;
    throw ArgumentError(std::string("no report for group ") + to_string(g));
  }
};

/// ||a - n|| / max(||a||, ||n||); 0 when both vanish.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  return scale == 0.0 ? 0.0 : (analytic - numeric).norm() / scale;
}

/// Central differences of full_loss over `starts` for every parameter entry.
inline ModelParams numeric_gradient(const Problem& p, const ModelParams& params, std::span<const Index> starts,
                                    double lambda, double step = 1e-5) {
  ModelParams probe = params;
  ModelParams out = params.zeros_like();
  auto w = probe.tensors();
  auto g = out.tensors();
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (Index j = 0; j < w[i]->size(); ++j) {
      double& x = w[i]->data()[j];
      const double saved = x;
      x = saved + step;
      const double up = full_loss(p, probe, starts, lambda);
      x = saved - step;
      const double down = full_loss(p, probe, starts, lambda);
      x = saved;
      g[i]->data()[j] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

/// Analytic gradient of full_loss (dropout off).
inline ModelParams analytic_gradient(const Problem& p, const ModelParams& params, std::span<const Index> starts,
                                     double lambda) {
  const EpochContext ctx = prepare_epoch(p, params);
  ModelParams grads;
  batch_gradient(p, ctx, params, starts, lambda, 0.0, nullptr, grads);
  return grads;
}

inline GradientReport compare_gradients(const ModelParams& analytic, const ModelParams& numeric,
                                        double tolerance = 1e-4) {
  GradientReport report;
  report.tolerance = tolerance;
  std::vector<std::pair<ParamGroup, std::string>> names;
  analytic.visit([&](ParamGroup g, const std::string& name, const Matrix&) { names.emplace_back(g, name); });
  const auto a = analytic.tensors();
  const auto n = numeric.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto [group, name] = names[i];
    auto it = std::find_if(report.groups.begin(), report.groups.end(), [&](const GroupError& e) { return e.group == group; });
    if (it == report.groups.end()) {
      report.groups.push_back({group, 0.0, name});
      it = std::prev(report.groups.end());
    }
    const double err = relative_error(*a[i], *n[i]);
    if (err > it->relative_error) {
      it->relative_error = err;
      it->worst_tensor = name;
    }
  }
  return report;
}

/// A small, fully exercised instance: every parameter group carries gradient.
struct GradientCheckConfig {
  Index nodes = 6;
  Index input_length = 4;
  Index hidden = 8;
  Index horizon = 1;
  Index order = 1;
  Index gru_layers = 3;
  Index steps = 16;
  double lambda = 1.5e-3;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

struct GradientCheckInstance {
  Problem problem;
  ModelParams params;
};

inline GradientCheckInstance gradient_check_instance(const GradientCheckConfig& c) {
  if (c.nodes > 8 || c.input_length > 4 || c.hidden > 8)
    throw ArgumentError("gradient checks are meant for N <= 8, L <= 4, H <= 8");
  auto rng = make_stream(c.seed, "gradcheck");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index n = c.nodes;
  Matrix series(n, c.steps);
  for (Index j = 0; j < c.steps; ++j)
    for (Index i = 0; i < n; ++i) series(i, j) = unit(rng);
  // Ring plus one random chord per node keeps every node connected.
  Matrix adj = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    adj(i, (i + 1) % n) = adj((i + 1) % n, i) = 1.0;
    const Index j = static_cast<Index>(unit(rng) * static_cast<double>(n)) % n;
    if (j != i) adj(i, j) = adj(j, i) = 1.0;
  }
  const auto random_graph = [&]() {
    Matrix m(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) m(i, j) = 2.0 * unit(rng) - 1.0;
    return row_softmax(Matrix(0.5 * (m + m.transpose())));
  };
  const Matrix gs = random_graph();
  const Matrix gt = random_graph();
  GradientCheckInstance inst{assemble_problem(series, adj, gs, gt, c.steps, kFullVariant, c.order, c.input_length,
                                              c.horizon),
                             init_params({n, c.hidden, c.horizon, c.gru_layers}, c.seed)};
  auto fill = [&](Matrix& m, double scale) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = scale * (2.0 * unit(rng) - 1.0);
  };
  fill(inst.params.gate.w_spatial, 0.5);
  fill(inst.params.gate.w_temporal, 0.5);
  fill(inst.params.gate.bias, 0.5);
  fill(inst.params.attn.value, 0.5);
  return inst;
}

inline GradientReport check_gradients(const Problem& p, const ModelParams& params, double lambda, double step = 1e-5,
                                      double tolerance = 1e-4) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelParams a = analytic_gradient(p, params, p.train_starts, lambda);
  const ModelParams n = numeric_gradient(p, params, p.train_starts, lambda, step);
  GradientReport r = compare_gradients(a, n, tolerance);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Builds the seeded small instance and checks every parameter group against central differences.
inline GradientReport verify_gradients(const GradientCheckConfig& c = {}) {
  const auto inst = gradient_check_instance(c);
  return check_gradients(inst.problem, inst.params, c.lambda, c.step, c.tolerance);
}

}  // namespace gfen
