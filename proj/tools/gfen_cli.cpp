// gfen: command-line front end for the traffic-speed forecasting pipeline.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gfen/gfen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "gfen 1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitMismatch = 4;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gfen::FormatError("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

/// Writes artifacts through a temp file + rename and keeps the run manifest.
class Run {
 public:
  Run(std::string command, fs::path out_dir) : command_(std::move(command)), out_dir_(std::move(out_dir)) {}

  const fs::path& out_dir() const { return out_dir_; }

  void input(const fs::path& path) { inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }

  template <class F>
  fs::path write(const fs::path& target, F&& body) {
    const fs::path path = target.is_absolute() ? target : out_dir_ / target;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw gfen::FormatError("cannot write " + tmp.string());
      body(out);
      out.flush();
      if (!out) throw gfen::FormatError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
    artifacts_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
    return path;
  }

  void finish(const gfen::TrainConfig& config) {
    json m;
    m["tool_version"] = kToolVersion;
    m["command"] = command_;
    m["seed"] = config.seed;
    m["config"] = config.to_map();
    m["inputs"] = inputs_;
    m["artifacts"] = artifacts_;
    const fs::path path = out_dir_ / (command_ + ".manifest.json");
    fs::create_directories(out_dir_);
    fs::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << m.dump(2) << '\n';
    }
    fs::rename(tmp, path);
  }

 private:
  std::string command_;
  fs::path out_dir_;
  json inputs_ = json::array();
  json artifacts_ = json::array();
};

struct DataArgs {
  std::string dir;
  std::string speed_file = "speed.csv";
  std::string adj_file = "adj.csv";
  double interval = 5.0;
  bool header = false;
  bool time_major = false;
  bool binarize = false;

  void add(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("--data", dir, "Directory holding the speed and adjacency CSVs");
    if (required) opt->required();
    app->add_option("--speed-file", speed_file, "Speed CSV name inside --data")->capture_default_str();
    app->add_option("--adj-file", adj_file, "Adjacency CSV name inside --data")->capture_default_str();
    app->add_option("--interval", interval, "Sampling interval in minutes")->capture_default_str();
    app->add_flag("--header", header, "Skip the first CSV row of the speed file");
    app->add_flag("--time-major", time_major, "Speed file has one row per time step");
    app->add_flag("--binarize", binarize, "Treat any positive adjacency weight as an edge");
  }

  fs::path speed_path() const { return fs::path(dir) / speed_file; }
  fs::path adj_path() const { return fs::path(dir) / adj_file; }

  gfen::SpeedMatrix speeds(Run& run) const {
    auto x = gfen::load_speed_matrix(speed_path(), interval, {header, time_major});
    run.input(speed_path());
    return x;
  }
  gfen::AdjacencyMatrix adjacency(Run& run) const {
    auto a = gfen::load_adjacency(adj_path(), binarize);
    run.input(adj_path());
    return a;
  }
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string out_dir = ".";
};

/// Config file first, then --seed, then per-command overrides.
struct TrainOverrides {
  std::optional<gfen::Index> epochs, hidden, k, input_length, horizon, batch, period;
  std::optional<double> lr, lambda, dropout;
  std::optional<std::string> reduction, variant;
  bool no_early_stop = false;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--hidden", hidden, "Hidden units");
    app->add_option("--k", k, "Difference order");
    app->add_option("--L", input_length, "Input window length");
    app->add_option("--P", horizon, "Prediction horizon");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--period", period, "Fix T_s instead of estimating it (0 = estimate)");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--lambda", lambda, "L2 weight");
    app->add_option("--dropout", dropout, "Dropout rate");
    app->add_option("--reduction", reduction, "Temporal graph reduction")->check(CLI::IsMember({"spectral", "umap"}));
    app->add_option("--variant", variant, "Model variant")->check(CLI::IsMember({"gfen", "base", "tstgf", "edc"}));
    app->add_flag("--no-early-stop", no_early_stop, "Keep training after the convergence epoch");
  }
};

gfen::TrainConfig resolve_config(const Globals& g, const TrainOverrides* o) {
  gfen::TrainConfig c = g.config.empty() ? gfen::TrainConfig{} : gfen::TrainConfig::load(g.config);
  if (g.seed_given) c.seed = g.seed;
  if (o) {
    if (o->epochs) c.max_epochs = *o->epochs;
    if (o->hidden) c.hidden_units = *o->hidden;
    if (o->k) c.k = *o->k;
    if (o->input_length) c.input_length = *o->input_length;
    if (o->horizon) c.horizon = *o->horizon;
    if (o->batch) c.batch_size = *o->batch;
    if (o->period) c.period = *o->period;
    if (o->lr) c.learning_rate = *o->lr;
    if (o->lambda) c.lambda = *o->lambda;
    if (o->dropout) c.dropout = *o->dropout;
    if (o->reduction) c.set("reduction", *o->reduction);
    if (o->variant) {
      c.fusion = *o->variant == "gfen" || *o->variant == "tstgf";
      c.edc = *o->variant == "gfen" || *o->variant == "edc";
    }
    if (o->no_early_stop) c.stop_at_convergence = false;
  }
  c.validate();
  return c;
}

void write_matrix(std::ostream& out, const gfen::Matrix& m) { gfen::write_csv(out, m); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

void write_metrics(std::ostream& out, const gfen::MetricsReport& m) {
  out << "rmse,mae,acc,r2,var\n" << fmt(m.rmse) << ',' << fmt(m.mae) << ',' << fmt(m.acc) << ',' << fmt(m.r2) << ','
      << fmt(m.var) << '\n';
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = gfen::detail::trim(item);
    if (t.empty()) continue;
    out.push_back(gfen::detail::parse_cell(t, 0, out.size()));
  }
  return out;
}

gfen::Checkpoint load_ckpt(const std::string& path, Run& run) {
  auto c = gfen::load_checkpoint(path);
  run.input(path);
  return c;
}

// ---------------------------------------------------------------------------------------------

int cmd_inspect_period(const Globals& g, const DataArgs& d, gfen::Index k, bool raw) {
  Run run("inspect-period", g.out_dir);
  const auto cfg = resolve_config(g, nullptr);
  const auto x = d.speeds(run);
  const auto train = gfen::split_train_test(x, cfg.train_ratio).first;
  const gfen::Matrix source = raw ? train.values : gfen::kth_difference(train.values, k).values;
  const auto est = gfen::dominant_period(gfen::aggregate_series(source));
  std::cout << "T_s = " << est.period_steps << " steps (" << est.period_steps * x.sample_interval << " minutes), bin "
            << est.dominant_bin << ", magnitude " << fmt(est.dominant_frequency_magnitude) << '\n';
  run.write("spectrum.csv", [&](std::ostream& out) {
    out << "bin,frequency,magnitude\n" << std::setprecision(17);
    for (const auto& b : est.spectrum) out << b.bin << ',' << b.frequency << ',' << b.magnitude << '\n';
  });
  run.finish(cfg);
  return kExitOk;
}

int cmd_build_graphs(const Globals& g, const DataArgs& d, const TrainOverrides& o) {
  Run run("build-graphs", g.out_dir);
  const auto cfg = resolve_config(g, &o);
  const auto x = d.speeds(run);
  const auto a = d.adjacency(run);
  if (a.nodes() != x.sensors())
    throw gfen::DimensionError("adjacency has " + std::to_string(a.nodes()) + " nodes, data has " +
                               std::to_string(x.sensors()) + " sensors");
  const auto train = gfen::split_train_test(x, cfg.train_ratio).first;
  const auto graphs = gfen::build_graphs(train, cfg.pipeline());
  std::cout << "T_s = " << graphs.period_steps << '\n';
  run.write("spatial_graph.csv", [&](std::ostream& out) { write_matrix(out, graphs.spatial); });
  run.write("temporal_graph.csv", [&](std::ostream& out) { write_matrix(out, graphs.temporal); });
  run.write("spatial_correlation.csv", [&](std::ostream& out) { write_matrix(out, graphs.spatial_raw.values); });
  run.write("period.txt", [&](std::ostream& out) { out << "period=" << graphs.period_steps << '\n'; });
  run.finish(cfg);
  return kExitOk;
}

int cmd_train(const Globals& g, const DataArgs& d, const TrainOverrides& o, const std::string& ckpt_out, bool quiet) {
  Run run("train", g.out_dir);
  const auto cfg = resolve_config(g, &o);
  const auto x = d.speeds(run);
  const auto a = d.adjacency(run);
  const auto opts = cfg.pipeline();
  const auto train = gfen::split_train_test(x, opts.train_ratio).first;
  const auto graphs = gfen::build_graphs(train, opts);
  const auto problem = gfen::make_problem(x, a, graphs, opts, cfg.variant());
  if (!quiet)
    std::cout << cfg.variant().name() << ": N=" << x.sensors() << " T=" << x.steps() << " T_s=" << graphs.period_steps
              << " train windows=" << problem.train_starts.size() << '\n';
  const auto result = gfen::fit(problem, cfg, [&](const gfen::EpochRecord& r) {
    if (!quiet)
      std::cout << "epoch " << r.epoch << " loss " << fmt(r.loss) << " rmse " << std::fixed << std::setprecision(3)
                << r.rmse3 << std::defaultfloat << " (" << fmt(r.seconds) << " s)\n"
                << std::flush;
  });
  gfen::Checkpoint ckpt{cfg, problem.scale, graphs.period_steps, graphs.spatial, graphs.temporal, result.params};
  const fs::path ckpt_path = ckpt_out.empty() ? fs::path("model.json") : fs::path(ckpt_out);
  run.write(ckpt_path, [&](std::ostream& out) { gfen::save_checkpoint(ckpt, out); });
  run.write("scale.txt", [&](std::ostream& out) {
    out << std::setprecision(17) << "min=" << problem.scale.min << "\nmax=" << problem.scale.max << '\n';
  });
  run.write("trace.csv", [&](std::ostream& out) {
    out << "# rmse3 is training-set RMSE in raw units, dropout off\n";
    result.trace.write_csv(out);
  });
  if (result.trace.convergence_epoch)
    std::cout << "converged at epoch " << *result.trace.convergence_epoch << '\n';
  else
    std::cout << "no convergence within " << result.trace.epochs.size() << " epochs\n";
  run.finish(cfg);
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const DataArgs& d, const std::string& ckpt_path, bool dump_edc) {
  Run run("evaluate", g.out_dir);
  const auto ckpt = load_ckpt(ckpt_path, run);
  const auto x = d.speeds(run);
  const auto a = d.adjacency(run);
  const auto problem = gfen::checkpoint_problem(ckpt, x, a);
  const auto e = gfen::evaluate(problem, ckpt.params);
  std::cout << "rmse " << fmt(e.metrics.rmse) << " mae " << fmt(e.metrics.mae) << " acc " << fmt(e.metrics.acc)
            << " r2 " << fmt(e.metrics.r2) << " var " << fmt(e.metrics.var) << '\n';
  run.write("metrics.csv", [&](std::ostream& out) { write_metrics(out, e.metrics); });
  run.write("predictions.csv", [&](std::ostream& out) { write_matrix(out, e.prediction.transpose()); });
  run.write("truth.csv", [&](std::ostream& out) { write_matrix(out, e.truth.transpose()); });
  if (dump_edc) {
    const gfen::Matrix bias = gfen::compute_bias(problem.residual, gfen::attention_scores(problem.spatial, ckpt.params.attn).values);
    run.write("edc_differenced.csv", [&](std::ostream& out) { write_matrix(out, problem.differenced.values); });
    run.write("edc_residual.csv", [&](std::ostream& out) { write_matrix(out, problem.residual); });
    run.write("edc_bias.csv", [&](std::ostream& out) { write_matrix(out, bias); });
    run.write("edc_input.csv", [&](std::ostream& out) { write_matrix(out, gfen::smoothed_input(problem.differenced, bias)); });
  }
  run.finish(ckpt.config);
  return kExitOk;
}

int cmd_robustness(const Globals& g, const DataArgs& d, const std::string& ckpt_path, const std::string& kind,
                   const std::string& params_list) {
  Run run("robustness", g.out_dir);
  const auto ckpt = load_ckpt(ckpt_path, run);
  const auto x = d.speeds(run);
  const auto a = d.adjacency(run);
  const auto problem = gfen::checkpoint_problem(ckpt, x, a);
  std::vector<std::pair<gfen::NoiseKind, double>> settings;
  const std::vector<gfen::NoiseKind> kinds = kind == "both"
                                                 ? std::vector{gfen::NoiseKind::gaussian, gfen::NoiseKind::poisson}
                                                 : std::vector{gfen::parse_noise_kind(kind)};
  for (auto k : kinds) {
    const auto levels = params_list.empty() ? gfen::standard_noise_levels(k) : parse_list(params_list);
    for (double p : levels) {
      if (!gfen::is_standard_noise_level(k, p))
        std::cerr << "warning: " << gfen::to_string(k) << " level " << p << " is outside the standard sweep\n";
      settings.emplace_back(k, p);
    }
  }
  const std::uint64_t seed = g.seed_given ? g.seed : ckpt.config.seed;
  const auto rows = gfen::run_robustness(problem, ckpt.params, x.values, settings, seed);
  run.write("robustness.csv", [&](std::ostream& out) {
    out << "kind,param,rmse,mae,acc\n";
    for (const auto& r : rows)
      out << r.kind << ',' << fmt(r.param) << ',' << fmt(r.metrics.rmse) << ',' << fmt(r.metrics.mae) << ','
          << fmt(r.metrics.acc) << '\n';
  });
  for (const auto& r : rows)
    std::cout << r.kind << ' ' << r.param << ": acc " << fmt(r.metrics.acc) << " rmse " << fmt(r.metrics.rmse) << '\n';
  auto cfg = ckpt.config;
  cfg.seed = seed;
  run.finish(cfg);
  return kExitOk;
}

int cmd_ablate(const Globals& g, const DataArgs& d, const TrainOverrides& o, bool quiet) {
  Run run("ablate", g.out_dir);
  const auto cfg = resolve_config(g, &o);
  const auto x = d.speeds(run);
  const auto a = d.adjacency(run);
  const auto rows = gfen::run_ablation(x, a, cfg, [&](const gfen::EpochRecord& r) {
    if (!quiet) std::cout << "  epoch " << r.epoch << " rmse " << r.rmse3 << '\n' << std::flush;
  });
  run.write("ablation.csv", [&](std::ostream& out) {
    out << "variant,rmse,mae\n";
    for (const auto& r : rows) out << r.variant << ',' << fmt(r.rmse) << ',' << fmt(r.mae) << '\n';
  });
  run.write("ablation_details.csv", [&](std::ostream& out) {
    out << "variant,split_checksum,epochs,convergence_epoch\n";
    for (const auto& r : rows)
      out << r.variant << ',' << r.split_checksum << ',' << r.epochs << ','
          << (r.convergence_epoch ? std::to_string(*r.convergence_epoch) : std::string("none")) << '\n';
  });
  for (const auto& r : rows) std::cout << r.variant << " rmse " << fmt(r.rmse) << " mae " << fmt(r.mae) << '\n';
  run.finish(cfg);
  return kExitOk;
}

int cmd_synth(const Globals& g, gfen::TrafficFixtureOptions o) {
  Run run("synth", g.out_dir);
  if (g.seed_given) o.seed = g.seed;
  const auto f = gfen::synthetic_traffic(o);
  run.write("speed.csv", [&](std::ostream& out) { write_matrix(out, f.speeds.values); });
  run.write("adj.csv", [&](std::ostream& out) {
    for (gfen::Index i = 0; i < f.adjacency.nodes(); ++i) {
      for (gfen::Index j = 0; j < f.adjacency.nodes(); ++j) out << (j ? "," : "") << f.adjacency.values(i, j);
      out << '\n';
    }
  });
  gfen::TrainConfig cfg;
  cfg.seed = o.seed;
  run.finish(cfg);
  std::cout << "wrote " << o.nodes << " sensors x " << o.days * o.steps_per_day << " steps to " << g.out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-speed forecasting with fused correlation graphs and differenced, attention-smoothed inputs"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--config", g.config, "Flat key=value training config");
  app.add_option("--out-dir", g.out_dir, "Directory for artifacts")->capture_default_str();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print summaries");

  DataArgs data;
  TrainOverrides over;
  std::string ckpt, out_ckpt, kind = "both", levels;
  gfen::Index k = 1;
  bool raw = false, dump_edc = false;
  gfen::TrafficFixtureOptions fixture;

  auto* inspect = app.add_subcommand("inspect-period", "Estimate the dominant period T_s and write the spectrum");
  data.add(inspect);
  inspect->add_option("--k", k, "Difference order applied before aggregation")->capture_default_str();
  inspect->add_flag("--raw", raw, "Analyse the undifferenced aggregate instead");

  auto* graphs = app.add_subcommand("build-graphs", "Build the spatial and temporal correlation graphs");
  data.add(graphs);
  over.add(graphs);

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint, trace and scale record");
  data.add(train);
  over.add(train);
  train->add_option("--out", out_ckpt, "Checkpoint path (default <out-dir>/model.json)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  data.add(evaluate);
  evaluate->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  evaluate->add_flag("--dump-edc", dump_edc, "Also write the differenced data, residual, bias and smoothed input");

  auto* robust = app.add_subcommand("robustness", "Evaluate a checkpoint with noise added to the inputs");
  data.add(robust);
  robust->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  robust->add_option("--kind", kind, "gaussian, poisson or both")
      ->check(CLI::IsMember({"gaussian", "poisson", "both"}))
      ->capture_default_str();
  robust->add_option("--params", levels, "Comma-separated noise levels (default: gaussian 0.2,0.4,0.8,1,2; poisson 1,2,4,8,16)");

  auto* ablate = app.add_subcommand("ablate", "Train and score the four model variants");
  data.add(ablate);
  over.add(ablate);

  auto* synth = app.add_subcommand("synth", "Write a synthetic speed/adjacency fixture");
  synth->add_option("--nodes", fixture.nodes, "Number of sensors")->capture_default_str();
  synth->add_option("--days", fixture.days, "Number of days")->capture_default_str();
  synth->add_option("--steps-per-day", fixture.steps_per_day, "Samples per day")->capture_default_str();
  synth->add_option("--noise", fixture.noise, "Std of the per-sensor AR(1) noise innovations, mph")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*inspect) return cmd_inspect_period(g, data, k, raw);
    if (*graphs) return cmd_build_graphs(g, data, over);
    if (*train) return cmd_train(g, data, over, out_ckpt, quiet);
    if (*evaluate) return cmd_evaluate(g, data, ckpt, dump_edc);
    if (*robust) return cmd_robustness(g, data, ckpt, kind, levels);
    if (*ablate) return cmd_ablate(g, data, over, quiet);
    if (*synth) return cmd_synth(g, fixture);
  } catch (const gfen::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const gfen::CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const gfen::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
