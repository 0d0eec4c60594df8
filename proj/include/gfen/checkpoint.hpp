#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gfen/training.hpp"

namespace gfen {

/// Everything needed to rerun a trained model: config, scale, frozen graphs and weights.
struct Checkpoint {
  TrainConfig config;
  ScaleRecord scale;
  Index period = 0;
  Matrix spatial;
  Matrix temporal;
  ModelParams params;

  Index nodes() const { return params.nodes(); }
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  // Row-major so the file reads naturally.
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  try {
    const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
      throw FormatError("checkpoint tensor " + what + " has inconsistent size");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint tensor " + what + ": " + e.what());
  }
}

}  // namespace detail

inline constexpr const char* kCheckpointFormat = "gfen-checkpoint/1";

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = c.config.to_map();
  j["scale"] = {{"min", c.scale.min}, {"max", c.scale.max}};
  j["period"] = c.period;
  j["nodes"] = c.nodes();
  j["hidden"] = c.params.hidden();
  j["horizon"] = c.params.horizon();
  j["gru_layers"] = c.params.gru.size();
  j["graphs"] = {{"spatial", detail::matrix_to_json(c.spatial)}, {"temporal", detail::matrix_to_json(c.temporal)}};
  nlohmann::json params = nlohmann::json::object();
  c.params.visit([&](ParamGroup, const std::string& name, const Matrix& m) { params[name] = detail::matrix_to_json(m); });
  j["params"] = std::move(params);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw FormatError("unsupported checkpoint format '" + j.at("format").get<std::string>() + "'");
    Checkpoint c;
    for (const auto& [key, value] : j.at("config").items()) c.config.set(key, value.get<std::string>());
    c.config.validate();
    c.scale.min = j.at("scale").at("min").get<double>();
    c.scale.max = j.at("scale").at("max").get<double>();
    c.period = j.at("period").get<Index>();
    c.spatial = detail::matrix_from_json(j.at("graphs").at("spatial"), "graphs.spatial");
    c.temporal = detail::matrix_from_json(j.at("graphs").at("temporal"), "graphs.temporal");
    const ModelShape shape{j.at("nodes").get<Index>(), j.at("hidden").get<Index>(), j.at("horizon").get<Index>(),
                           j.at("gru_layers").get<Index>()};
    c.params = init_params(shape, 0);
    const auto& params = j.at("params");
    c.params.visit([&](ParamGroup, const std::string& name, Matrix& m) {
      Matrix loaded = detail::matrix_from_json(params.at(name), name);
      if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
        throw FormatError("checkpoint tensor " + name + " is " + shape_of(loaded) + ", expected " + shape_of(m));
      m = std::move(loaded);
    });
    const Index n = shape.nodes;
    require_shape(c.spatial, n, n, "checkpoint spatial graph");
    require_shape(c.temporal, n, n, "checkpoint temporal graph");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, std::ostream& out) { out << to_json(c).dump(1) << '\n'; }

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

/// The problem a checkpoint was trained on, rebuilt over `raw`. Sensor count must agree.
inline Problem checkpoint_problem(const Checkpoint& c, const SpeedMatrix& raw, const AdjacencyMatrix& adjacency) {
  if (raw.sensors() != c.nodes() || adjacency.nodes() != c.nodes())
    throw CheckpointMismatchError("checkpoint has N=" + std::to_string(c.nodes()) + " but data has " +
                                  std::to_string(raw.sensors()) + " sensors and adjacency " +
                                  std::to_string(adjacency.nodes()) + " nodes");
  const PipelineOptions opts = c.config.pipeline();
  const auto n_train = split_train_test(raw, opts.train_ratio).first.steps();
  Problem p = assemble_problem(c.scale.normalize(raw.values), adjacency.values, c.spatial, c.temporal, n_train,
                               c.config.variant(), opts.order, opts.input_length, opts.horizon);
  p.scale = c.scale;
  return p;
}

}  // namespace gfen
