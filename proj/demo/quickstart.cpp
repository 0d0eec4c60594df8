// End-to-end run on a small synthetic corridor: period, graphs, training, test metrics.

#include <iomanip>
#include <iostream>

#include "gfen/gfen.hpp"

int main() {
  gfen::TrafficFixtureOptions fixture;
  fixture.nodes = 8;
  fixture.days = 4;
  const auto data = gfen::synthetic_traffic(fixture);

  gfen::TrainConfig cfg;
  cfg.hidden_units = 16;
  cfg.gru_layers = 2;
  cfg.max_epochs = 20;
  cfg.seed = 1;
  const auto opts = cfg.pipeline();

  const auto [train, test] = gfen::split_train_test(data.speeds, opts.train_ratio);
  const gfen::GraphBundle graphs = gfen::build_graphs(train, opts);
  std::cout << "sensors " << data.speeds.sensors() << ", steps " << data.speeds.steps() << ", T_s "
            << graphs.period_steps << '\n';

  const gfen::Problem problem = gfen::make_problem(data.speeds, data.adjacency, graphs, opts, cfg.variant());
  const gfen::FitResult fit = gfen::fit(problem, cfg, [](const gfen::EpochRecord& e) {
    std::cout << "epoch " << std::setw(3) << e.epoch << "  train rmse " << std::fixed << std::setprecision(3) << e.rmse3
              << std::defaultfloat << '\n';
  });
  if (fit.trace.convergence_epoch) std::cout << "converged at epoch " << *fit.trace.convergence_epoch << '\n';

  const gfen::MetricsReport m = gfen::evaluate(problem, fit.params).metrics;
  std::cout << std::setprecision(4) << "test  rmse " << m.rmse << "  mae " << m.mae << "  acc " << m.acc << "  r2 "
            << m.r2 << "  var " << m.var << '\n';
}
