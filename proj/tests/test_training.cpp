#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace gfen;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.hidden_units = 6;
  c.gru_layers = 1;
  c.batch_size = 16;
  c.max_epochs = 5;
  c.input_length = 6;
  c.dropout = 0.0;
  c.seed = 3;
  return c;
}

// Smooth travelling waves in [0.1, 0.9]; scale {0, 1} so raw and normalized units agree.
Problem wave_problem(Variant v, Index n = 4, Index t = 240) {
  Matrix x(n, t);
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s)
      x(i, s) = 0.5 + 0.4 * std::sin(2 * std::numbers::pi * static_cast<double>(s - 3 * i) / 48.0);
  Matrix adj = Matrix::Zero(n, n);
  for (Index i = 0; i + 1 < n; ++i) adj(i, i + 1) = adj(i + 1, i) = 1;
  const Matrix g = row_softmax(Matrix::Identity(n, n));
  Problem p = assemble_problem(x, adj, g, g, t * 4 / 5, v, 1, 6, 1);
  p.scale = {0.0, 1.0};
  return p;
}

}  // namespace

TEST(Convergence, FirstRepeatedThreeDecimalValue) {
  EXPECT_EQ(check_convergence(std::vector<double>{5.1234, 5.1231}), 2);
  EXPECT_EQ(check_convergence(std::vector<double>{5.0, 4.9, 4.9, 4.9}), 3);
  EXPECT_EQ(check_convergence(std::vector<double>{1.0}), std::nullopt);
  EXPECT_EQ(check_convergence(std::vector<double>{3.0, 2.0, 1.0}), std::nullopt);
  EXPECT_EQ(check_convergence(std::vector<double>{}), std::nullopt);
  EXPECT_EQ(check_convergence(std::vector<double>{2.0004, 1.9996}), 2);
}

TEST(Convergence, EpochIsAtLeastTwoWhenPresent) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(1 + rng() % 8);
    for (auto& v : r) v = static_cast<double>(rng() % 4) / 1000.0 + 1.0;
    const auto e = check_convergence(r);
    if (!e) continue;
    ASSERT_GE(*e, 2);
    ASSERT_EQ(round3(r[static_cast<std::size_t>(*e - 1)]), round3(r[static_cast<std::size_t>(*e - 2)]));
    for (Index k = 2; k < *e; ++k)
      ASSERT_NE(round3(r[static_cast<std::size_t>(k - 1)]), round3(r[static_cast<std::size_t>(k - 2)]));
  }
}

TEST(Adam, FirstStepMovesEveryEntryByTheLearningRate) {
  ModelParams p = init_params({3, 4, 1, 1}, 1);
  const ModelParams before = p;
  ModelParams g = p.zeros_like();
  g.visit([](ParamGroup, const std::string&, Matrix& m) { m.setConstant(-2.5); });
  Adam adam(p, 0.01);
  adam.step(p, g);
  const auto a = before.tensors();
  const auto b = p.tensors();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_LE(((*b[i] - *a[i]).array() - 0.01).abs().maxCoeff(), 1e-9);
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
  const Problem p = wave_problem(kFullVariant);
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  c.max_epochs = 2;
  c.stop_at_convergence = false;
  const FitResult r = fit(p, c);
  const ModelParams init = initial_params(p, c);
  const auto a = init.tensors();
  const auto b = r.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  ASSERT_EQ(r.trace.epochs.size(), 2u);
  EXPECT_EQ(r.trace.epochs[0].rmse, r.trace.epochs[1].rmse);
  EXPECT_EQ(r.trace.convergence_epoch, 2);
}

TEST(Fit, SameSeedSameRun) {
  const Problem p = wave_problem(kFullVariant);
  TrainConfig c = small_config();
  c.dropout = 0.2;
  c.max_epochs = 3;
  c.stop_at_convergence = false;
  const FitResult a = fit(p, c), b = fit(p, c);
  const auto ta = a.params.tensors(), tb = b.params.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(*ta[i], *tb[i]);
  for (std::size_t e = 0; e < a.trace.epochs.size(); ++e) EXPECT_EQ(a.trace.epochs[e].loss, b.trace.epochs[e].loss);
  c.seed = 4;
  EXPECT_NE(fit(p, c).trace.epochs.back().loss, a.trace.epochs.back().loss);
}

TEST(Fit, UnusedGroupsStayZero) {
  TrainConfig c = small_config();
  c.max_epochs = 2;
  c.stop_at_convergence = false;
  const FitResult r = fit(wave_problem(kBaseVariant), c);
  EXPECT_EQ(r.params.gate.w_spatial.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.gate.bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.attn.query.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.attn.value.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fit, LearnsSmoothWaves) {
  for (Variant v : {kBaseVariant, kFullVariant}) {
    const Problem p = wave_problem(v);
    TrainConfig c = small_config();
    c.max_epochs = 60;
    c.lambda = 1e-4;
    c.stop_at_convergence = false;
    const FitResult r = fit(p, c);
    const auto& ep = r.trace.epochs;
    EXPECT_LT(ep.back().loss, ep.front().loss) << v.name();
    EXPECT_LT(ep.back().rmse, 0.05) << v.name();
    const double test_rmse = evaluate(p, r.params).metrics.rmse;
    EXPECT_LT(test_rmse, 0.05) << v.name();
  }
}

TEST(Fit, TraceRmseMatchesAnIndependentPass) {
  const Problem p = wave_problem(kFullVariant);
  TrainConfig c = small_config();
  c.max_epochs = 2;
  c.stop_at_convergence = false;
  const FitResult r = fit(p, c);
  const auto preds = predict(p, r.params, p.train_starts);
  double sq = 0;
  for (std::size_t w = 0; w < preds.size(); ++w)
    sq += (preds[w] - p.series.middleCols(p.train_starts[w] + p.input_length, 1)).squaredNorm();
  const double rmse = std::sqrt(sq / static_cast<double>(preds.size() * 4));
  EXPECT_NEAR(r.trace.epochs.back().rmse, rmse, 1e-12);
}

TEST(Fit, NonFiniteDataDiverges) {
  Problem p = wave_problem(kBaseVariant);
  p.series(1, 30) = std::numeric_limits<double>::quiet_NaN();
  try {
    fit(p, small_config());
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Fit, WindowMismatchIsRejected) {
  TrainConfig c = small_config();
  c.input_length = 12;
  EXPECT_THROW(fit(wave_problem(kBaseVariant), c), ArgumentError);
}

TEST(Config, ParseSaveRoundTrip) {
  std::istringstream in("# training\nhidden_units = 32\nlearning_rate=0.005\nreduction=umap  # comment\nedc=false\n\n");
  const TrainConfig c = TrainConfig::parse(in);
  EXPECT_EQ(c.hidden_units, 32);
  EXPECT_EQ(c.learning_rate, 0.005);
  EXPECT_EQ(c.reduction, ReductionMode::umap);
  EXPECT_FALSE(c.edc);
  EXPECT_EQ(c.batch_size, 33);
  std::ostringstream out;
  c.save(out);
  std::istringstream back(out.str());
  EXPECT_EQ(TrainConfig::parse(back).to_map(), c.to_map());
  EXPECT_NE(out.str().find("dropout=0.2\n"), std::string::npos);
}

TEST(Config, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 33);
  EXPECT_EQ(c.hidden_units, 64);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.gcn_layers, 2);
  EXPECT_EQ(c.gru_layers, 3);
  EXPECT_EQ(c.dropout, 0.2);
  EXPECT_EQ(c.k, 1);
  EXPECT_EQ(c.lambda, 1.5e-3);
  EXPECT_EQ(c.max_epochs, 300);
  EXPECT_EQ(c.input_length, 12);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, Rejections) {
  const auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return TrainConfig::parse(in);
  };
  EXPECT_THROW(parse("hiden_units=3\n"), ArgumentError);
  EXPECT_THROW(parse("gcn_layers=3\n"), ArgumentError);
  EXPECT_THROW(parse("dropout=1\n"), ArgumentError);
  EXPECT_THROW(parse("lambda=-1\n"), ArgumentError);
  EXPECT_THROW(parse("batch_size=4x\n"), ArgumentError);
  EXPECT_THROW(parse("edc=maybe\n"), ArgumentError);
  EXPECT_THROW(parse("just a line\n"), ArgumentError);
  EXPECT_THROW(parse("max_epochs=0\n"), ArgumentError);
}

TEST(Trace, CsvLayout) {
  TrainTrace t;
  t.epochs.push_back({1, 0.5, 1.23456, 1.235, 0.25});
  std::ostringstream out;
  t.write_csv(out);
  EXPECT_EQ(out.str(), "epoch,loss,rmse3,seconds\n1,0.5,1.235,0.25\n");
}
