#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "gfen/data_io.hpp"
#include "gfen/rng.hpp"

namespace gfen {

/// A corridor of sensors with daily rush hours that travel downstream, sensor-level noise and
/// occasional incidents. Deterministic per seed; used for fixtures and the demo.
struct TrafficFixtureOptions {
  Index nodes = 10;
  Index days = 7;
  Index steps_per_day = 288;  // 5-minute sampling
  double noise = 1.5;         // std of the AR(1) innovations, mph
  double incident_rate = 0.002;
  std::uint64_t seed = 1;
};

struct TrafficFixture {
  SpeedMatrix speeds;
  AdjacencyMatrix adjacency;
};

/// Corridor 0-1-...-(n-1) with a short-cut every fourth node.
inline AdjacencyMatrix corridor_adjacency(Index n) {
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1.0;
  for (Index i = 0; i + 3 < n; i += 4) a(i, i + 3) = a(i + 3, i) = 1.0;
  return {a};
}

inline TrafficFixture synthetic_traffic(const TrafficFixtureOptions& o) {
  if (o.nodes < 1 || o.days < 1 || o.steps_per_day < 2) throw ArgumentError("fixture needs nodes, days, steps >= 1");
  auto rng = make_stream(o.seed, "fixture");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Index n = o.nodes, t_total = o.days * o.steps_per_day;
  const double day = static_cast<double>(o.steps_per_day);

  Vector free_flow(n), morning(n), evening(n);
  for (Index i = 0; i < n; ++i) {
    free_flow(i) = 55.0 + 10.0 * unit(rng);
    morning(i) = 12.0 + 10.0 * unit(rng);
    evening(i) = 15.0 + 12.0 * unit(rng);
  }
  const auto bump = [&](double phase, double center, double width) {
    double d = std::abs(phase - center);
    d = std::min(d, day - d);
    return std::exp(-0.5 * (d / width) * (d / width));
  };

  Matrix x(n, t_total);
  Vector ar = Vector::Zero(n);
  Vector incident = Vector::Zero(n);
  for (Index t = 0; t < t_total; ++t) {
    const double weekday = (t / o.steps_per_day) % 7 < 5 ? 1.0 : 0.45;
    for (Index i = 0; i < n; ++i) {
      // Congestion reaches sensor i about 2 steps after sensor i-1, within stretches of 10 sensors.
      const double phase = std::fmod(static_cast<double>(t - 2 * (i % 10)) + 10.0 * day, day);
      const double dip = weekday * (morning(i) * bump(phase, 0.333 * day, 0.035 * day) +
                                    evening(i) * bump(phase, 0.729 * day, 0.045 * day));
      ar(i) = 0.8 * ar(i) + o.noise * gauss(rng);
      if (unit(rng) < o.incident_rate) incident(i) = 15.0 + 15.0 * unit(rng);
      incident(i) *= 0.93;
      const double upstream = i > 0 ? 0.4 * incident(i - 1) : 0.0;
      x(i, t) = std::max(0.0, free_flow(i) - dip + ar(i) - incident(i) - upstream);
    }
  }
  TrafficFixture f;
  f.speeds.values = std::move(x);
  f.speeds.sample_interval = 1440.0 / day;
  for (Index i = 0; i < n; ++i) f.speeds.sensor_ids.push_back("s" + std::to_string(i));
  f.adjacency = corridor_adjacency(n);
  return f;
}

/// Sum of sinusoids: amplitude a_j at period p_j (in steps), sampled at t = 0..length-1.
inline std::vector<double> tone_series(Index length, const std::vector<std::pair<double, double>>& tones) {
  std::vector<double> s(static_cast<std::size_t>(length), 0.0);
  for (Index t = 0; t < length; ++t)
    for (const auto& [period, amplitude] : tones)
      s[static_cast<std::size_t>(t)] += amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
  return s;
}

}  // namespace gfen
