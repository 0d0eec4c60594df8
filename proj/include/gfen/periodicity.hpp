#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numeric>
#include <vector>

#include "gfen/types.hpp"

namespace gfen {

struct SpectrumBin {
  std::size_t bin = 0;
  double frequency = 0.0;  // cycles per step
  double magnitude = 0.0;
};

struct PeriodEstimate {
  Index period_steps = 0;
  std::size_t dominant_bin = 0;
  double dominant_frequency_magnitude = 0.0;
  std::vector<SpectrumBin> spectrum;
};

/// Network aggregate: element t is the sum over sensors of column t.
inline std::vector<double> aggregate_series(const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Index t = 0; t < x.cols(); ++t) out[static_cast<std::size_t>(t)] = x.col(t).sum();
  return out;
}

/// One-sided DFT magnitudes |sum_t x_t e^{-2 pi i b t / T}| for b = 0..T/2.
inline std::vector<SpectrumBin> magnitude_spectrum(const std::vector<double>& series) {
  const std::size_t n = series.size();
  const std::size_t bins = n / 2 + 1;
  std::vector<double> in(series);
  std::unique_ptr<fftw_complex[], decltype(&fftw_free)> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)), &fftw_free);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.get(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<SpectrumBin> spectrum(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    spectrum[b] = {b, static_cast<double>(b) / static_cast<double>(n),
                   std::hypot(out[b][0], out[b][1])};
  }
  return spectrum;
}

/// Period of the strongest spectral peak: T_s = round(T / bin).
///
/// The mean is removed before the transform, which leaves every non-DC bin unchanged but keeps
/// round-off from a large offset out of them. Ties within 1e-9 relative go to the lower
/// frequency. With `exclude_dc` false and the DC bin dominant, the period is T.
inline PeriodEstimate dominant_period(const std::vector<double>& series, bool exclude_dc = true) {
  constexpr double kMinPeak = 1e-9;
  const std::size_t n = series.size();
  if (n < 4) throw ArgumentError("period estimation needs at least 4 samples");

  std::vector<double> centered(series);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  if (exclude_dc)
    for (double& v : centered) v -= mean;

  PeriodEstimate est;
  est.spectrum = magnitude_spectrum(centered);
  if (exclude_dc) est.spectrum[0].magnitude = std::abs(mean) * static_cast<double>(n);

  const std::size_t first = exclude_dc ? 1 : 0;
  std::size_t best = first;
  for (std::size_t b = first + 1; b < est.spectrum.size(); ++b) {
    if (est.spectrum[b].magnitude > est.spectrum[best].magnitude * (1.0 + 1e-9)) best = b;
  }
  const double peak = est.spectrum[best].magnitude;
  if (!(peak > kMinPeak)) throw NoPeriodError("no period detected: spectrum has no peak above 1e-9");

  est.dominant_bin = best;
  est.dominant_frequency_magnitude = peak;
  const auto total = static_cast<double>(n);
  est.period_steps = best == 0 ? static_cast<Index>(n)
                               : static_cast<Index>(std::lround(total / static_cast<double>(best)));
  if (est.period_steps < 2) est.period_steps = 2;
  return est;
}

}  // namespace gfen
