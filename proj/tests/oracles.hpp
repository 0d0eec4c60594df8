#pragma once

// Straight-line reference implementations used only by the tests. Each one is written with
// plain loops and no shared helpers from the library, so agreement is meaningful.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "gfen/gfen.hpp"

namespace oracle {

using gfen::Index;
using gfen::Matrix;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

inline std::vector<double> dft_magnitudes(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    mag[k] = std::abs(acc);
  }
  return mag;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    double total = 0;
    for (Index j = 0; j < m.cols(); ++j) total += std::exp(m(i, j));
    for (Index j = 0; j < m.cols(); ++j) out(i, j) = std::exp(m(i, j)) / total;
  }
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix attention(const Matrix& gs, const Matrix& wq, const Matrix& wk, const Matrix& wv) {
  const Matrix q = matmul(wq, gs), k = matmul(wk, gs), v = matmul(wv, gs);
  Matrix logits = matmul(q, transpose(k));
  for (Index i = 0; i < logits.rows(); ++i)
    for (Index j = 0; j < logits.cols(); ++j) logits(i, j) /= std::sqrt(static_cast<double>(gs.rows()));
  return matmul(softmax_rows(logits), v);
}

struct Metrics {
  double rmse, mae, acc, r2, var;
};

inline Metrics metrics(const Matrix& y, const Matrix& p) {
  const double n = static_cast<double>(y.size());
  double se = 0, ae = 0, yy = 0, ysum = 0, esum = 0;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.cols(); ++j) {
      const double e = y(i, j) - p(i, j);
      se += e * e;
      ae += std::abs(e);
      yy += y(i, j) * y(i, j);
      ysum += y(i, j);
      esum += e;
    }
  const double ymean = ysum / n, emean = esum / n;
  double sst = 0, evar = 0;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.cols(); ++j) {
      sst += (y(i, j) - ymean) * (y(i, j) - ymean);
      const double e = y(i, j) - p(i, j);
      evar += (e - emean) * (e - emean);
    }
  return {std::sqrt(se / n), ae / n, 1.0 - std::sqrt(se) / std::sqrt(yy), 1.0 - se / sst, 1.0 - (evar / n) / (sst / n)};
}

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Element-by-element forward pass of the predictor (no dropout).
inline Matrix forward(const Matrix& window, const Matrix& s, const gfen::ModelParams& p, const Matrix* residual = nullptr) {
  const Index n = window.rows(), len = window.cols(), h = p.gcn.w1.cols();
  std::vector<Matrix> seq;
  for (Index t = 0; t < len; ++t) {
    Matrix sx(n, 1);
    for (Index i = 0; i < n; ++i) {
      sx(i, 0) = 0;
      for (Index j = 0; j < n; ++j) sx(i, 0) += s(i, j) * window(j, t);
    }
    Matrix hid(n, h);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < h; ++c) hid(i, c) = std::max(0.0, sx(i, 0) * p.gcn.w1(0, c));
    Matrix sh = matmul(s, hid);
    Matrix out = matmul(sh, p.gcn.w2);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < h; ++c) out(i, c) = sig(out(i, c));
    seq.push_back(out);
  }
  for (const auto& layer : p.gru) {
    Matrix state = Matrix::Zero(n, h);
    for (Index t = 0; t < len; ++t) {
      const Matrix& x = seq[static_cast<std::size_t>(t)];
      const Index din = x.cols();
      Matrix next(n, h);
      for (Index i = 0; i < n; ++i) {
        std::vector<double> u(h), r(h);
        for (Index c = 0; c < h; ++c) {
          double au = layer.b_update(0, c), ar = layer.b_reset(0, c);
          for (Index k = 0; k < din; ++k) au += x(i, k) * layer.w_update(k, c), ar += x(i, k) * layer.w_reset(k, c);
          for (Index k = 0; k < h; ++k)
            au += state(i, k) * layer.w_update(din + k, c), ar += state(i, k) * layer.w_reset(din + k, c);
          u[c] = sig(au);
          r[c] = sig(ar);
        }
        for (Index c = 0; c < h; ++c) {
          double ac = layer.b_cell(0, c);
          for (Index k = 0; k < din; ++k) ac += x(i, k) * layer.w_cell(k, c);
          for (Index k = 0; k < h; ++k) ac += r[k] * state(i, k) * layer.w_cell(din + k, c);
          next(i, c) = u[c] * state(i, c) + (1.0 - u[c]) * std::tanh(ac);
        }
      }
      state = next;
      seq[static_cast<std::size_t>(t)] = state;
    }
  }
  Matrix pred = matmul(seq.back(), p.out.w_out);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < pred.cols(); ++c)
      pred(i, c) += (residual ? (*residual)(i, 0) : window(i, len - 1)) * p.out.w_res(0, c);
  return pred;
}

}  // namespace oracle
