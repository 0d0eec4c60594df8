#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gfen/types.hpp"

namespace gfen {

/// N x T speed observations; rows are sensors, columns are time steps.
struct SpeedMatrix {
  Matrix values;
  std::vector<std::string> sensor_ids;
  double sample_interval = 5.0;  // minutes

  Index sensors() const { return values.rows(); }
  Index steps() const { return values.cols(); }
};

/// Binary, symmetric, zero-diagonal road connectivity.
struct AdjacencyMatrix {
  Matrix values;
  Index nodes() const { return values.rows(); }
};

struct CsvOptions {
  bool header = false;      // skip the first line
  bool time_major = false;  // file rows are time steps (transposed on load)
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  std::string_view t = trim(cell);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ParseError(row, col, std::string(cell));
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Rectangular numeric table. Row/column indices in errors are 0-based over data rows.
inline CsvTable read_numeric_csv(std::istream& in, bool header) {
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (first && header) {
      first = false;
      std::string_view rest(line);
      while (true) {
        auto pos = rest.find(',');
        table.header.emplace_back(trim(rest.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
      }
      continue;
    }
    first = false;
    std::vector<double> cells;
    std::string_view rest(line);
    std::size_t col = 0;
    while (true) {
      auto pos = rest.find(',');
      cells.push_back(parse_cell(rest.substr(0, pos), row, col));
      ++col;
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (!rows.empty() && cells.size() != rows.front().size()) {
      throw FormatError("ragged table: row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(cells));
    ++row;
  }
  if (rows.empty()) throw FormatError("empty table");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return table;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline void validate(const SpeedMatrix& x) {
  if (x.sensors() < 1) throw ValidationError("speed matrix needs at least one sensor");
  if (x.steps() < 2) throw ValidationError("speed matrix needs at least two time steps");
  if (!(x.sample_interval > 0.0)) throw ValidationError("sample interval must be positive");
  for (Index i = 0; i < x.values.rows(); ++i)
    for (Index t = 0; t < x.values.cols(); ++t) {
      const double v = x.values(i, t);
      if (!std::isfinite(v)) throw ValidationError("non-finite speed at (" + std::to_string(i) + "," + std::to_string(t) + ")");
      if (v < 0.0) throw ValidationError("negative speed at (" + std::to_string(i) + "," + std::to_string(t) + ")");
    }
}

inline void validate(const AdjacencyMatrix& a) {
  const Matrix& m = a.values;
  if (m.rows() != m.cols()) throw DimensionError("adjacency must be square, got " + shape_of(m));
  for (Index i = 0; i < m.rows(); ++i) {
    if (m(i, i) != 0.0) throw ValidationError("adjacency diagonal must be zero (node " + std::to_string(i) + ")");
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0 && m(i, j) != 1.0)
        throw ValidationError("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not 0/1");
      if (m(i, j) != m(j, i))
        throw ValidationError("adjacency is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
}

inline SpeedMatrix parse_speed_matrix(std::istream& in, double sample_interval, CsvOptions opts = {}) {
  auto table = detail::read_numeric_csv(in, opts.header);
  SpeedMatrix x;
  x.values = opts.time_major ? Matrix(table.values.transpose()) : std::move(table.values);
  x.sample_interval = sample_interval;
  if (opts.time_major && static_cast<Index>(table.header.size()) == x.sensors()) {
    x.sensor_ids = std::move(table.header);
  } else {
    for (Index i = 0; i < x.sensors(); ++i) x.sensor_ids.push_back(std::to_string(i));
  }
  validate(x);
  return x;
}

inline SpeedMatrix load_speed_matrix(const std::filesystem::path& path, double sample_interval,
                                     CsvOptions opts = {}) {
  auto in = detail::open_input(path);
  return parse_speed_matrix(in, sample_interval, opts);
}

/// With `binarize`, any positive weight becomes an edge, the diagonal is cleared and the
/// result symmetrized; useful for distance-weighted adjacency files.
inline AdjacencyMatrix parse_adjacency(std::istream& in, bool binarize = false) {
  AdjacencyMatrix a{detail::read_numeric_csv(in, false).values};
  if (a.values.rows() != a.values.cols())
    throw DimensionError("adjacency must be square, got " + shape_of(a.values));
  if (binarize) {
    Matrix b = (a.values.array() > 0.0).cast<double>().matrix();
    b = b.cwiseMax(Matrix(b.transpose()));
    b.diagonal().setZero();
    a.values = std::move(b);
  }
  validate(a);
  return a;
}

inline AdjacencyMatrix load_adjacency(const std::filesystem::path& path, bool binarize = false) {
  auto in = detail::open_input(path);
  return parse_adjacency(in, binarize);
}

inline SpeedMatrix columns(const SpeedMatrix& x, Index begin, Index count) {
  SpeedMatrix out;
  out.values = x.values.middleCols(begin, count);
  out.sensor_ids = x.sensor_ids;
  out.sample_interval = x.sample_interval;
  return out;
}

/// Chronological split: the first floor(ratio*T) columns train, the rest test.
inline std::pair<SpeedMatrix, SpeedMatrix> split_train_test(const SpeedMatrix& x, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must lie in (0,1)");
  const Index t = x.steps();
  const auto n_train = static_cast<Index>(std::floor(ratio * static_cast<double>(t)));
  return {columns(x, 0, n_train), columns(x, n_train, t - n_train)};
}

/// Global min/max of the training split, reused for every other split.
struct ScaleRecord {
  double min = 0.0;
  double max = 1.0;

  double range() const { return max - min; }
  Matrix normalize(const Matrix& m) const { return (m.array() - min) / range(); }
  Matrix denormalize(const Matrix& m) const { return (m.array() * range() + min).matrix(); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << std::setprecision(17) << "min=" << min << "\nmax=" << max << "\n";
  }

  static ScaleRecord load(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    ScaleRecord s;
    bool have_min = false, have_max = false;
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = detail::trim(std::string_view(line).substr(0, eq));
      double v = detail::parse_cell(std::string_view(line).substr(eq + 1), 0, 0);
      if (key == "min") s.min = v, have_min = true;
      if (key == "max") s.max = v, have_max = true;
    }
    if (!have_min || !have_max) throw FormatError("scale record needs min and max");
    return s;
  }
};

inline ScaleRecord fit_min_max(const Matrix& train) {
  if (train.size() == 0) throw InsufficientDataError("cannot fit a scale to empty data");
  ScaleRecord s{train.minCoeff(), train.maxCoeff()};
  if (!(s.max > s.min)) throw DegenerateError("constant data: min == max, cannot scale");
  return s;
}

inline std::pair<SpeedMatrix, ScaleRecord> min_max_normalize(const SpeedMatrix& x) {
  const ScaleRecord s = fit_min_max(x.values);
  SpeedMatrix out = x;
  out.values = s.normalize(x.values);
  return {std::move(out), s};
}

/// Input/target pairs cut with stride 1: window i covers columns [i, i+L), target [i+L, i+L+P).
struct WindowedDataset {
  std::vector<Matrix> inputs;
  std::vector<Matrix> targets;
  Index input_length = 0;
  Index horizon = 0;

  std::size_t size() const { return inputs.size(); }
};

inline WindowedDataset make_windows(const Matrix& x, Index input_length, Index horizon) {
  if (input_length < 1 || horizon < 1) throw ArgumentError("window length and horizon must be positive");
  if (input_length + horizon > x.cols())
    throw InsufficientDataError("need L+P <= T, got L=" + std::to_string(input_length) +
                                " P=" + std::to_string(horizon) + " T=" + std::to_string(x.cols()));
  WindowedDataset ds;
  ds.input_length = input_length;
  ds.horizon = horizon;
  const Index count = x.cols() - input_length - horizon + 1;
  ds.inputs.reserve(static_cast<std::size_t>(count));
  ds.targets.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    ds.inputs.emplace_back(x.middleCols(i, input_length));
    ds.targets.emplace_back(x.middleCols(i + input_length, horizon));
  }
  return ds;
}

inline void write_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

}  // namespace gfen
