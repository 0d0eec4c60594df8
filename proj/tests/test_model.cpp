#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace gfen;

namespace {

ModelParams random_params(Index n, Index h, Index p, Index layers, std::uint64_t seed) {
  ModelParams m = init_params({n, h, p, layers}, seed);
  std::mt19937_64 rng(seed + 100);
  m.visit([&](ParamGroup, const std::string&, Matrix& t) { t = oracle::random_matrix(t.rows(), t.cols(), rng, -0.8, 0.8); });
  return m;
}

Matrix random_propagator(Index n, std::mt19937_64& rng) {
  Matrix g = oracle::random_matrix(n, n, rng, 0, 1);
  return normalize_propagator(g).values;
}

// Loss with dropout masks drawn from a fixed copy of `rng`, so every call sees the same masks.
double dropout_loss(const Problem& p, const ModelParams& params, double lambda, double rate, std::mt19937_64 rng) {
  const EpochContext ctx = prepare_epoch(p, params);
  double sq = 0;
  for (Index s : p.train_starts) {
    const Matrix last = p.series.col(s + p.input_length - 1);
    const Matrix pred = forward(ctx.inputs.middleCols(s, p.input_length), ctx.propagator, params, rate, &rng, nullptr,
                                p.variant.edc ? &last : nullptr);
    sq += (pred - p.series.middleCols(s + p.input_length, p.horizon)).squaredNorm();
  }
  return std::sqrt(sq) + lambda * params.squared_norm();
}

}  // namespace

TEST(Propagator, MatchesLoopNormalization) {
  std::mt19937_64 rng(1);
  const Matrix g = oracle::random_matrix(5, 5, rng, 0, 2);
  const Matrix s = normalize_propagator(g).values;
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) {
      double di = 1, dj = 1;
      for (Index c = 0; c < 5; ++c) di += g(i, c), dj += g(j, c);
      EXPECT_NEAR(s(i, j), (g(i, j) + (i == j ? 1.0 : 0.0)) / std::sqrt(di * dj), 1e-15);
    }
  EXPECT_EQ(normalize_propagator(Matrix::Zero(3, 3)).values, Matrix::Identity(3, 3));
  EXPECT_THROW(normalize_propagator(-Matrix::Ones(2, 2)), ValidationError);
}

TEST(Forward, MatchesElementwiseOracle) {
  std::mt19937_64 rng(2);
  for (Index layers : {1, 3}) {
    const ModelParams p = random_params(5, 6, 2, layers, 10 + static_cast<std::uint64_t>(layers));
    const Matrix s = random_propagator(5, rng);
    const Matrix window = oracle::random_matrix(5, 7, rng, 0, 1);
    const Matrix fast = forward(window, s, p);
    const Matrix slow = oracle::forward(window, s, p);
    EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-12 * (1 + slow.cwiseAbs().maxCoeff()));
    const Matrix res = oracle::random_matrix(5, 1, rng);
    const Matrix fast_r = forward(window, s, p, 0.0, nullptr, nullptr, &res);
    EXPECT_LE((fast_r - oracle::forward(window, s, p, &res)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, ZeroParametersPredictZero) {
  const ModelParams p = init_params({4, 8, 3, 3}, 1).zeros_like();
  std::mt19937_64 rng(3);
  EXPECT_EQ(forward(oracle::random_matrix(4, 12, rng), random_propagator(4, rng), p), Matrix::Zero(4, 3));
}

TEST(Forward, ResidualWeightOneCopiesTheLastColumn) {
  ModelParams p = init_params({4, 8, 2, 3}, 1).zeros_like();
  p.out.w_res.setOnes();
  std::mt19937_64 rng(4);
  const Matrix window = oracle::random_matrix(4, 12, rng);
  const Matrix pred = forward(window, random_propagator(4, rng), p);
  EXPECT_EQ(pred.col(0), window.col(11));
  EXPECT_EQ(pred.col(1), window.col(11));
}

TEST(Forward, ShapeErrors) {
  const ModelParams p = init_params({4, 8, 1, 1}, 1);
  EXPECT_THROW(forward(Matrix::Zero(3, 5), Matrix::Identity(4, 4), p), DimensionError);
  const Matrix bad = Matrix::Zero(3, 1);
  EXPECT_THROW(forward(Matrix::Zero(4, 5), Matrix::Identity(4, 4), p, 0.0, nullptr, nullptr, &bad), DimensionError);
}

TEST(Gru, StateStaysInsideTheUnitInterval) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const ModelParams p = random_params(3, 5, 1, 1, static_cast<std::uint64_t>(trial));
    const GruLayer& g = p.gru[0];
    Matrix h = oracle::random_matrix(3, 5, rng, -1, 1);
    for (int t = 0; t < 20; ++t) {
      h = gru_cell(oracle::random_matrix(3, 5, rng, -50, 50), h, g);
      ASSERT_LE(h.cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(Loss, HandExamples) {
  ModelParams p = init_params({2, 4, 1, 1}, 1).zeros_like();
  EXPECT_DOUBLE_EQ(loss(Matrix::Zero(2, 1), (Matrix(2, 1) << 3, 4).finished(), p, 0.5), 5.0);
  p.gcn.w1(0, 0) = 2.0;
  EXPECT_DOUBLE_EQ(loss(Matrix::Ones(2, 1), Matrix::Ones(2, 1), p, 0.1), 0.4);
  EXPECT_THROW(loss(Matrix::Ones(2, 1), Matrix::Ones(2, 1), p, -0.1), ArgumentError);
  EXPECT_THROW(loss(Matrix::Ones(2, 1), Matrix::Ones(3, 1), p, 0.1), DimensionError);
}

TEST(Gradients, EveryVariantMatchesCentralDifferences) {
  for (Variant v : {kBaseVariant, kFusionVariant, kEdcVariant}) {
    auto inst = gradient_check_instance({});
    inst.problem.variant = v;
    const auto r = check_gradients(inst.problem, inst.params, 1.5e-3);
    EXPECT_TRUE(r.passed()) << v.name();
  }
}

TEST(Gradients, HorizonAndDifferenceOrder) {
  GradientCheckConfig c;
  c.horizon = 3;
  c.order = 2;
  c.gru_layers = 2;
  c.nodes = 4;
  c.steps = 14;
  EXPECT_TRUE(verify_gradients(c).passed());
}

TEST(Gradients, DropoutWithFixedMasks) {
  auto inst = gradient_check_instance({});
  const Problem& p = inst.problem;
  const double lambda = 1.5e-3, rate = 0.3, h = 1e-5;
  const auto rng = make_stream(3, "dropout");

  const EpochContext ctx = prepare_epoch(p, inst.params);
  ModelParams analytic;
  auto r = rng;
  batch_gradient(p, ctx, inst.params, p.train_starts, lambda, rate, &r, analytic);

  ModelParams probe = inst.params, numeric = inst.params.zeros_like();
  auto w = probe.tensors();
  auto g = numeric.tensors();
  for (std::size_t i = 0; i < w.size(); ++i)
    for (Index j = 0; j < w[i]->size(); ++j) {
      double& x = w[i]->data()[j];
      const double saved = x;
      x = saved + h;
      const double up = dropout_loss(p, probe, lambda, rate, rng);
      x = saved - h;
      const double down = dropout_loss(p, probe, lambda, rate, rng);
      x = saved;
      g[i]->data()[j] = (up - down) / (2 * h);
    }
  const auto report = compare_gradients(analytic, numeric);
  for (const auto& e : report.groups) EXPECT_LT(e.relative_error, 1e-4) << to_string(e.group) << " " << e.worst_tensor;
}

TEST(Gradients, LinearResidualPathIsExact) {
  auto inst = gradient_check_instance({});
  inst.problem.variant = kBaseVariant;
  ModelParams p = inst.params.zeros_like();
  p.out.w_res(0, 0) = 0.7;
  const ModelParams a = analytic_gradient(inst.problem, p, inst.problem.train_starts, 0.0);
  const ModelParams n = numeric_gradient(inst.problem, p, inst.problem.train_starts, 0.0);
  EXPECT_LT(relative_error(a.out.w_res, n.out.w_res), 1e-9);
  EXPECT_EQ(a.out.w_out, Matrix::Zero(a.out.w_out.rows(), a.out.w_out.cols()));
}

TEST(Gradients, CorruptedGradientIsFlagged) {
  const auto inst = gradient_check_instance({});
  const auto& p = inst.problem;
  const ModelParams a = analytic_gradient(p, inst.params, p.train_starts, 1.5e-3);
  const ModelParams n = numeric_gradient(p, inst.params, p.train_starts, 1.5e-3);
  EXPECT_TRUE(compare_gradients(a, n).passed());
  for (ParamGroup bad : {ParamGroup::gate, ParamGroup::attention, ParamGroup::gcn, ParamGroup::gru, ParamGroup::output}) {
    ModelParams c = a;
    c.visit([&](ParamGroup g, const std::string&, Matrix& m) {
      if (g == bad) m *= 1.1;
    });
    const auto report = compare_gradients(c, n);
    EXPECT_FALSE(report.passed()) << to_string(bad);
    for (const auto& e : report.groups) {
      if (e.group == bad) EXPECT_GT(e.relative_error, 0.05);
      else EXPECT_LT(e.relative_error, 1e-4);
    }
  }
}
