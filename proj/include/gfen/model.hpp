#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gfen/edc.hpp"
#include "gfen/fusion.hpp"
#include "gfen/rng.hpp"
#include "gfen/types.hpp"

namespace gfen {

enum class ParamGroup { gate, attention, gcn, gru, output };

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::gate: return "gate";
    case ParamGroup::attention: return "attention";
    case ParamGroup::gcn: return "gcn";
    case ParamGroup::gru: return "gru";
    case ParamGroup::output: return "output";
  }
  return "?";
}

/// Two-layer graph convolution: W1 is F_in x H, W2 is H x F_out.
struct GcnParams {
  Matrix w1;
  Matrix w2;
};

/// One GRU layer. Weights act on the row concatenation [x, h], so each is (D_in + H) x H.
/// Biases are 1 x H.
struct GruLayer {
  Matrix w_update;
  Matrix w_reset;
  Matrix w_cell;
  Matrix b_update;
  Matrix b_reset;
  Matrix b_cell;

  Index hidden() const { return w_update.cols(); }
  Index input_width() const { return w_update.rows() - w_update.cols(); }
};

/// W_out is H x P, W_res is F_in x P (F_in = 1).
struct OutputParams {
  Matrix w_out;
  Matrix w_res;
};

struct ModelShape {
  Index nodes = 0;
  Index hidden = 64;
  Index horizon = 1;
  Index gru_layers = 3;
};

struct ModelParams {
  GateParams gate;
  AttnParams attn;
  GcnParams gcn;
  std::vector<GruLayer> gru;
  OutputParams out;

  Index nodes() const { return gate.w_spatial.rows(); }
  Index hidden() const { return gcn.w1.cols(); }
  Index horizon() const { return out.w_out.cols(); }

  /// Calls f(group, name, matrix) for every trainable tensor in a fixed order.
  template <class Self, class F>
  static void visit_impl(Self& self, F&& f) {
    f(ParamGroup::gate, std::string("gate.w_spatial"), self.gate.w_spatial);
    f(ParamGroup::gate, std::string("gate.w_temporal"), self.gate.w_temporal);
    f(ParamGroup::gate, std::string("gate.bias"), self.gate.bias);
    f(ParamGroup::attention, std::string("attn.query"), self.attn.query);
    f(ParamGroup::attention, std::string("attn.key"), self.attn.key);
    f(ParamGroup::attention, std::string("attn.value"), self.attn.value);
    f(ParamGroup::gcn, std::string("gcn.w1"), self.gcn.w1);
    f(ParamGroup::gcn, std::string("gcn.w2"), self.gcn.w2);
    for (std::size_t l = 0; l < self.gru.size(); ++l) {
      const std::string p = "gru." + std::to_string(l) + ".";
      f(ParamGroup::gru, p + "w_update", self.gru[l].w_update);
      f(ParamGroup::gru, p + "w_reset", self.gru[l].w_reset);
      f(ParamGroup::gru, p + "w_cell", self.gru[l].w_cell);
      f(ParamGroup::gru, p + "b_update", self.gru[l].b_update);
      f(ParamGroup::gru, p + "b_reset", self.gru[l].b_reset);
      f(ParamGroup::gru, p + "b_cell", self.gru[l].b_cell);
    }
    f(ParamGroup::output, std::string("out.w_out"), self.out.w_out);
    f(ParamGroup::output, std::string("out.w_res"), self.out.w_res);
  }
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, std::forward<F>(f));
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, std::forward<F>(f));
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](ParamGroup, const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  double squared_norm() const {
    double s = 0.0;
    visit([&](ParamGroup, const std::string&, const Matrix& m) { s += m.squaredNorm(); });
    return s;
  }

  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out;
    visit([&](ParamGroup, const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
  }

  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out;
    visit([&](ParamGroup, const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
  }
};

namespace detail {

inline Matrix uniform_matrix(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace detail

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for the predictor, drawn from the "init" stream.
/// The gate starts at zero (neutral (GS+GT)/2 fusion). Attention query/key are drawn the same
/// way but the value projection starts at zero, so the bias B is zero at step 0.
inline ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  auto rng = make_stream(seed, "init");
  const Index n = shape.nodes, h = shape.hidden, p = shape.horizon;
  const auto bound = [](Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  ModelParams m;
  m.gate = GateParams::zeros(n);
  m.attn.query = detail::uniform_matrix(n, n, bound(n), rng);
  m.attn.key = detail::uniform_matrix(n, n, bound(n), rng);
  m.attn.value = Matrix::Zero(n, n);
  m.gcn.w1 = detail::uniform_matrix(1, h, bound(1), rng);
  m.gcn.w2 = detail::uniform_matrix(h, h, bound(h), rng);
  for (Index l = 0; l < shape.gru_layers; ++l) {
    const Index fan = 2 * h;
    GruLayer g;
    g.w_update = detail::uniform_matrix(fan, h, bound(fan), rng);
    g.w_reset = detail::uniform_matrix(fan, h, bound(fan), rng);
    g.w_cell = detail::uniform_matrix(fan, h, bound(fan), rng);
    g.b_update = detail::uniform_matrix(1, h, bound(fan), rng);
    g.b_reset = detail::uniform_matrix(1, h, bound(fan), rng);
    g.b_cell = detail::uniform_matrix(1, h, bound(fan), rng);
    m.gru.push_back(std::move(g));
  }
  m.out.w_out = detail::uniform_matrix(h, p, bound(h), rng);
  m.out.w_res = detail::uniform_matrix(1, p, bound(1), rng);
  return m;
}

/// S~ = D^{-1/2} (TG + I) D^{-1/2}, D the row degrees of TG + I.
struct NormalizedPropagator {
  Matrix values;
};

inline NormalizedPropagator normalize_propagator(const Matrix& graph) {
  if (graph.rows() != graph.cols()) throw DimensionError("propagator needs a square graph, got " + shape_of(graph));
  if ((graph.array() < 0.0).any()) throw ValidationError("propagator graph has a negative entry");
  Matrix loops = graph + Matrix::Identity(graph.rows(), graph.cols());
  const Vector inv_sqrt = loops.rowwise().sum().cwiseSqrt().cwiseInverse();
  return {inv_sqrt.asDiagonal() * loops * inv_sqrt.asDiagonal()};
}

/// dL/dTG from dL/dS~.
inline Matrix propagator_backward(const Matrix& graph, const Matrix& propagator, const Matrix& grad) {
  const Index n = graph.rows();
  const Vector degree = (graph + Matrix::Identity(n, n)).rowwise().sum();
  const Vector inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  Matrix dloops = inv_sqrt.asDiagonal() * grad * inv_sqrt.asDiagonal();
  const Matrix gs = grad.cwiseProduct(propagator);
  const Vector ddegree = -0.5 * (gs.rowwise().sum() + gs.colwise().sum().transpose()).cwiseQuotient(degree);
  dloops.colwise() += ddegree;
  return dloops;
}

struct GcnCache {
  Matrix propagated_input;  // S X
  Matrix pre_relu;          // S X W1
  Matrix hidden;            // ReLU(.)
  Matrix propagated_hidden; // S ReLU(.)
  Matrix output;            // sigmoid(. W2)
};

/// O_G = sigmoid(S ReLU(S X W1) W2).
inline Matrix gcn_forward(const Matrix& propagator, const Matrix& x, const GcnParams& p, GcnCache* cache = nullptr) {
  const Index n = propagator.rows();
  require_shape(propagator, n, n, "propagator");
  if (x.rows() != n || x.cols() != p.w1.rows() || p.w2.rows() != p.w1.cols())
    throw DimensionError("gcn: input " + shape_of(x) + " incompatible with W1 " + shape_of(p.w1) + ", W2 " +
                         shape_of(p.w2));
  GcnCache local;
  GcnCache& c = cache ? *cache : local;
  c.propagated_input = propagator * x;
  c.pre_relu = c.propagated_input * p.w1;
  c.hidden = c.pre_relu.cwiseMax(0.0);
  c.propagated_hidden = propagator * c.hidden;
  c.output = sigmoid(Matrix(c.propagated_hidden * p.w2));
  return c.output;
}

inline Matrix gcn_forward(const NormalizedPropagator& s, const Matrix& x, const GcnParams& p) {
  return gcn_forward(s.values, x, p);
}

/// Accumulates into grads / grad_propagator; returns dL/dX.
inline Matrix gcn_backward(const Matrix& propagator, const Matrix& x, const GcnParams& p, const GcnCache& c,
                           const Matrix& grad_out, GcnParams& grads, Matrix& grad_propagator) {
  const Matrix dz = grad_out.cwiseProduct(c.output).cwiseProduct((1.0 - c.output.array()).matrix());
  grads.w2.noalias() += c.propagated_hidden.transpose() * dz;
  const Matrix dprop_hidden = dz * p.w2.transpose();
  grad_propagator.noalias() += dprop_hidden * c.hidden.transpose();
  Matrix dpre = propagator.transpose() * dprop_hidden;
  dpre = dpre.cwiseProduct((c.pre_relu.array() > 0.0).cast<double>().matrix());
  grads.w1.noalias() += c.propagated_input.transpose() * dpre;
  const Matrix dprop_input = dpre * p.w1.transpose();
  grad_propagator.noalias() += dprop_input * x.transpose();
  return propagator.transpose() * dprop_input;
}

struct GruCache {
  Matrix input;
  Matrix prev;
  Matrix update;
  Matrix reset;
  Matrix cell;
};

/// One GRU step for a batch of rows: u, r = sigmoid([x,h]W + b); c = tanh([x, r.*h]W_c + b_c);
/// h' = u.*h + (1-u).*c.
inline Matrix gru_cell(const Matrix& x, const Matrix& h_prev, const GruLayer& g, GruCache* cache = nullptr) {
  const Index din = g.input_width(), hid = g.hidden();
  if (x.cols() != din || h_prev.cols() != hid || x.rows() != h_prev.rows())
    throw DimensionError("gru: input " + shape_of(x) + " / state " + shape_of(h_prev) + " incompatible with layer (" +
                         std::to_string(din) + "+" + std::to_string(hid) + ")x" + std::to_string(hid));
  const Index rows = x.rows();
  const Matrix ones = Matrix::Ones(rows, 1);
  Matrix u = x * g.w_update.topRows(din) + h_prev * g.w_update.bottomRows(hid) + ones * g.b_update;
  Matrix r = x * g.w_reset.topRows(din) + h_prev * g.w_reset.bottomRows(hid) + ones * g.b_reset;
  u = sigmoid(u);
  r = sigmoid(r);
  Matrix c = x * g.w_cell.topRows(din) + r.cwiseProduct(h_prev) * g.w_cell.bottomRows(hid) + ones * g.b_cell;
  c = c.array().tanh().matrix();
  Matrix h = u.cwiseProduct(h_prev) + (1.0 - u.array()).matrix().cwiseProduct(c);
  if (cache) {
    cache->input = x;
    cache->prev = h_prev;
    cache->update = std::move(u);
    cache->reset = std::move(r);
    cache->cell = std::move(c);
  }
  return h;
}

inline RowVector gru_cell(const RowVector& x, const RowVector& h_prev, const GruLayer& g) {
  return gru_cell(Matrix(x), Matrix(h_prev), g).row(0);
}

/// Backward of one step. Returns dL/dx; overwrites grad_prev with dL/dh_prev.
inline Matrix gru_backward(const GruLayer& g, const GruCache& c, const Matrix& grad_h, GruLayer& grads,
                           Matrix& grad_prev) {
  const Index din = g.input_width(), hid = g.hidden();
  const Matrix one_minus_u = (1.0 - c.update.array()).matrix();
  const Matrix du = grad_h.cwiseProduct(c.prev - c.cell);
  const Matrix dc = grad_h.cwiseProduct(one_minus_u);
  grad_prev = grad_h.cwiseProduct(c.update);

  const Matrix dc_pre = dc.cwiseProduct((1.0 - c.cell.array().square()).matrix());
  const Matrix reset_prev = c.reset.cwiseProduct(c.prev);
  grads.w_cell.topRows(din).noalias() += c.input.transpose() * dc_pre;
  grads.w_cell.bottomRows(hid).noalias() += reset_prev.transpose() * dc_pre;
  grads.b_cell += dc_pre.colwise().sum();
  Matrix dx = dc_pre * g.w_cell.topRows(din).transpose();
  const Matrix dreset_prev = dc_pre * g.w_cell.bottomRows(hid).transpose();
  const Matrix dr = dreset_prev.cwiseProduct(c.prev);
  grad_prev += dreset_prev.cwiseProduct(c.reset);

  const Matrix du_pre = du.cwiseProduct(c.update).cwiseProduct(one_minus_u);
  const Matrix dr_pre = dr.cwiseProduct(c.reset).cwiseProduct((1.0 - c.reset.array()).matrix());
  grads.w_update.topRows(din).noalias() += c.input.transpose() * du_pre;
  grads.w_update.bottomRows(hid).noalias() += c.prev.transpose() * du_pre;
  grads.w_reset.topRows(din).noalias() += c.input.transpose() * dr_pre;
  grads.w_reset.bottomRows(hid).noalias() += c.prev.transpose() * dr_pre;
  grads.b_update += du_pre.colwise().sum();
  grads.b_reset += dr_pre.colwise().sum();
  dx.noalias() += du_pre * g.w_update.topRows(din).transpose() + dr_pre * g.w_reset.topRows(din).transpose();
  grad_prev.noalias() += du_pre * g.w_update.bottomRows(hid).transpose() + dr_pre * g.w_reset.bottomRows(hid).transpose();
  return dx;
}

/// Everything the backward pass needs from one window's forward pass.
struct WindowCache {
  Matrix window;
  Matrix residual;                           // empty when the last window column was used
  std::vector<GcnCache> gcn;                 // per step
  std::vector<std::vector<GruCache>> gru;    // [layer][step]
  std::vector<std::vector<Matrix>> masks;    // [layer][step], empty when not training
  Matrix final_hidden;                       // dropout applied
};

/// Forward pass over an N x L window: per-step GCN embedding, stacked GRU, then
/// W_out on the last hidden state plus W_res on the residual column (N x 1; the last input
/// column unless `residual` is given).
/// Dropout (inverted, rate `dropout`) acts on every GRU layer output when `rng` is given.
inline Matrix forward(const Matrix& window, const Matrix& propagator, const ModelParams& p, double dropout = 0.0,
                      std::mt19937_64* rng = nullptr, WindowCache* cache = nullptr, const Matrix* residual = nullptr) {
  const Index n = propagator.rows(), len = window.cols(), hid = p.hidden();
  if (window.rows() != n || len < 1) throw DimensionError("window " + shape_of(window) + " for N=" + std::to_string(n));
  if (residual) require_shape(*residual, n, 1, "residual column");
  const bool training = rng != nullptr && dropout > 0.0;
  const auto layers = p.gru.size();
  std::bernoulli_distribution keep(1.0 - dropout);
  const double scale = training ? 1.0 / (1.0 - dropout) : 1.0;

  if (cache) {
    cache->window = window;
    cache->residual = residual ? *residual : Matrix();
    cache->gcn.assign(static_cast<std::size_t>(len), {});
    cache->gru.assign(layers, std::vector<GruCache>(static_cast<std::size_t>(len)));
    cache->masks.assign(layers, {});
  }
  std::vector<Matrix> seq(static_cast<std::size_t>(len));
  for (Index t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    seq[ts] = gcn_forward(propagator, window.col(t), p.gcn, cache ? &cache->gcn[ts] : nullptr);
  }
  Matrix h;
  for (std::size_t l = 0; l < layers; ++l) {
    h = Matrix::Zero(n, hid);
    for (Index t = 0; t < len; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      h = gru_cell(seq[ts], h, p.gru[l], cache ? &cache->gru[l][ts] : nullptr);
      seq[ts] = h;
      if (training) {
        Matrix mask(n, hid);
        for (Index j = 0; j < hid; ++j)
          for (Index i = 0; i < n; ++i) mask(i, j) = keep(*rng) ? scale : 0.0;
        seq[ts] = seq[ts].cwiseProduct(mask);
        if (cache) cache->masks[l].push_back(std::move(mask));
      }
    }
  }
  const Matrix& last = seq.back();
  if (cache) cache->final_hidden = last;
  if (residual) return last * p.out.w_out + *residual * p.out.w_res;
  return last * p.out.w_out + window.col(len - 1) * p.out.w_res;
}

inline Matrix forward(const Matrix& window, const NormalizedPropagator& s, const ModelParams& p) {
  return forward(window, s.values, p);
}

/// Backpropagates dL/dprediction through one cached window. Accumulates parameter gradients
/// (GCN, GRU, output), dL/dS~ and dL/dwindow.
inline void backward(const Matrix& propagator, const ModelParams& p, const WindowCache& c, const Matrix& grad_pred,
                     ModelParams& grads, Matrix& grad_propagator, Matrix& grad_window) {
  const Index n = propagator.rows(), len = c.window.cols(), hid = p.hidden();
  const auto layers = p.gru.size();
  grads.out.w_out.noalias() += c.final_hidden.transpose() * grad_pred;
  if (c.residual.size() == 0) {
    grads.out.w_res.noalias() += c.window.col(len - 1).transpose() * grad_pred;
    grad_window.col(len - 1).noalias() += grad_pred * p.out.w_res.transpose();
  } else {
    grads.out.w_res.noalias() += c.residual.transpose() * grad_pred;
  }

  // Gradient w.r.t. each (post-dropout) output of the current layer.
  std::vector<Matrix> dseq(static_cast<std::size_t>(len), Matrix::Zero(n, hid));
  dseq.back() = grad_pred * p.out.w_out.transpose();
  for (std::size_t l = layers; l-- > 0;) {
    Matrix dh_next = Matrix::Zero(n, hid);
    for (Index t = len; t-- > 0;) {
      const auto ts = static_cast<std::size_t>(t);
      Matrix dh = c.masks[l].empty() ? dseq[ts] : dseq[ts].cwiseProduct(c.masks[l][ts]);
      dh += dh_next;
      Matrix dprev;
      dseq[ts] = gru_backward(p.gru[l], c.gru[l][ts], dh, grads.gru[l], dprev);
      dh_next = std::move(dprev);
    }
  }
  for (Index t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    grad_window.col(t) +=
        gcn_backward(propagator, c.window.col(t), p.gcn, c.gcn[ts], dseq[ts], grads.gcn, grad_propagator);
  }
}

/// ||target - pred||_F + lambda * (sum of squared parameter entries).
inline double loss(const Matrix& pred, const Matrix& target, const ModelParams& p, double lambda) {
  if (lambda < 0.0) throw ArgumentError("regularization weight must be non-negative");
  require_same_shape(pred, target, "loss target");
  return (target - pred).norm() + lambda * p.squared_norm();
}

}  // namespace gfen
