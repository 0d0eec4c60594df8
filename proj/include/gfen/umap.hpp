#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "gfen/rng.hpp"
#include "gfen/types.hpp"

namespace gfen {

struct UmapOptions {
  int n_neighbors = 15;
  int n_components = 2;
  double min_dist = 0.1;
  double spread = 1.0;
  int n_epochs = 200;
  int negative_sample_rate = 5;
  double learning_rate = 1.0;
  std::uint64_t seed = 0;
};

namespace detail {

/// Fits 1 / (1 + a d^{2b}) to the min_dist/spread target curve by Gauss-Newton.
inline std::pair<double, double> umap_curve(double min_dist, double spread) {
  std::vector<double> xs, ys;
  for (int i = 1; i <= 300; ++i) {
    const double x = 3.0 * spread * i / 300.0;
    xs.push_back(x);
    ys.push_back(x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread));
  }
  double a = 1.5, b = 0.9;
  for (int it = 0; it < 200; ++it) {
    double jtj[2][2] = {{0, 0}, {0, 0}}, jtr[2] = {0, 0};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double p = std::pow(xs[i], 2.0 * b);
      const double f = 1.0 / (1.0 + a * p);
      const double r = f - ys[i];
      const double da = -p * f * f;
      const double db = -a * p * 2.0 * std::log(xs[i]) * f * f;
      jtj[0][0] += da * da, jtj[0][1] += da * db, jtj[1][1] += db * db;
      jtr[0] += da * r, jtr[1] += db * r;
    }
    jtj[1][0] = jtj[0][1];
    const double damp = 1e-9;
    jtj[0][0] += damp, jtj[1][1] += damp;
    const double det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    const double step_a = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
    const double step_b = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
    a -= step_a, b -= step_b;
    if (std::abs(step_a) + std::abs(step_b) < 1e-12) break;
  }
  return {a, b};
}

struct FuzzyEdge {
  Index head;
  Index tail;
  double weight;
};

/// Symmetrized fuzzy k-nearest-neighbour graph (smooth-kNN distances, probabilistic union).
inline std::vector<FuzzyEdge> fuzzy_graph(const Matrix& points, int n_neighbors) {
  const Index n = points.rows();
  const int k = std::max(1, std::min<int>(n_neighbors, static_cast<int>(n) - 1));
  Matrix dist(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) dist(i, j) = (points.row(i) - points.row(j)).norm();

  Matrix w = Matrix::Zero(n, n);
  const double target = std::log2(static_cast<double>(k));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index p, Index q) { return dist(i, p) < dist(i, q); });
    std::vector<Index> nn;
    for (Index j : order) {
      if (j == i) continue;
      nn.push_back(j);
      if (static_cast<int>(nn.size()) == k) break;
    }
    double rho = 0.0;
    for (Index j : nn)
      if (dist(i, j) > 0.0) {
        rho = dist(i, j);
        break;
      }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      double sum = 0.0;
      for (Index j : nn) sum += std::exp(-std::max(0.0, dist(i, j) - rho) / sigma);
      if (std::abs(sum - target) < 1e-5) break;
      if (sum > target) {
        hi = sigma;
        sigma = 0.5 * (lo + hi);
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? sigma * 2.0 : 0.5 * (lo + hi);
      }
    }
    for (Index j : nn) w(i, j) = std::exp(-std::max(0.0, dist(i, j) - rho) / sigma);
  }
  Matrix sym = w + w.transpose() - w.cwiseProduct(w.transpose());
  std::vector<FuzzyEdge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && sym(i, j) > 0.0) edges.push_back({i, j, sym(i, j)});
  return edges;
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace detail

/// Seeded UMAP-style embedding of the rows of `points` into `n_components` dimensions.
inline Matrix umap_embed(const Matrix& points, const UmapOptions& opts) {
  const Index n = points.rows();
  const Index dim = opts.n_components;
  auto rng = make_stream(opts.seed, "umap");
  std::uniform_real_distribution<double> init(-10.0, 10.0);
  Matrix y(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index d = 0; d < dim; ++d) y(i, d) = init(rng);
  if (n < 2) return y;

  const auto [a, b] = detail::umap_curve(opts.min_dist, opts.spread);
  const auto edges = detail::fuzzy_graph(points, opts.n_neighbors);
  if (edges.empty()) return y;
  double wmax = 0.0;
  for (const auto& e : edges) wmax = std::max(wmax, e.weight);

  std::vector<double> every(edges.size()), next(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    every[e] = wmax / edges[e].weight;
    next[e] = every[e];
  }
  std::uniform_int_distribution<Index> pick(0, n - 1);

  for (int epoch = 1; epoch <= opts.n_epochs; ++epoch) {
    const double alpha = opts.learning_rate * (1.0 - static_cast<double>(epoch - 1) / opts.n_epochs);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (next[e] > epoch) continue;
      next[e] += every[e];
      const Index i = edges[e].head, j = edges[e].tail;
      double d2 = (y.row(i) - y.row(j)).squaredNorm();
      if (d2 > 0.0) {
        const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (1.0 + a * std::pow(d2, b));
        for (Index d = 0; d < dim; ++d) {
          const double g = detail::clip4(coeff * (y(i, d) - y(j, d)));
          y(i, d) += g * alpha;
          y(j, d) -= g * alpha;
        }
      }
      for (int s = 0; s < opts.negative_sample_rate; ++s) {
        const Index k = pick(rng);
        if (k == i) continue;
        d2 = (y.row(i) - y.row(k)).squaredNorm();
        const double coeff = 2.0 * b / ((0.001 + d2) * (1.0 + a * std::pow(d2, b)));
        for (Index d = 0; d < dim; ++d) {
          const double g = d2 > 0.0 ? detail::clip4(coeff * (y(i, d) - y(k, d))) : 4.0;
          y(i, d) += g * alpha;
        }
      }
    }
  }
  return y;
}

}  // namespace gfen
