#pragma once

#include <Eigen/Dense>

#include <string>

#include "gfen/errors.hpp"

namespace gfen {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + shape_of(m));
  }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  require_shape(b, a.rows(), a.cols(), what);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix sigmoid(const Matrix& m) {
  return m.unaryExpr([](double x) { return sigmoid(x); });
}

}  // namespace gfen
