#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "strcgp/data.hpp"
#include "strcgp/filtering.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"

namespace strcgp {

/// Wall-clock scaling of full filter+smoother runs against the number of
/// time steps (single site). Also fits the log-log slope, the check that
/// the cost really is linear in the step count.
struct BenchResult {
  std::vector<Eigen::Index> sizes;
  std::vector<std::vector<double>> seconds;  // per size, one entry per rep
  double slope = 0.0;                        // log time vs log n_t

  double median_seconds(std::size_t i) const {
    std::vector<double> v = seconds[i];
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  }
  // Fastest repetition; the least noisy runtime estimate on a busy machine.
  double min_seconds(std::size_t i) const {
    return *std::min_element(seconds[i].begin(), seconds[i].end());
  }
  double total_min_seconds() const {
    double t = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) t += min_seconds(i);
    return t;
  }
};

namespace detail {

// Step length 2^-10 is exactly representable, so every dt coincides and the
// transition cache stays at one entry.
inline Dataset bench_dataset(Eigen::Index n_steps) {
  Dataset d;
  d.times.resize(n_steps);
  for (Eigen::Index k = 0; k < n_steps; ++k)
    d.times[k] = static_cast<double>(k) / 1024.0;
  d.grid = Matrix::Zero(1, 0);
  d.y.resize(n_steps, 1);
  CounterRng rng(12345);
  for (Eigen::Index k = 0; k < n_steps; ++k)
    d.y(k, 0) = std::sin(0.4 * d.times[k]) + 0.3 * rng.normal();
  d.observed = BoolArray::Constant(n_steps, 1, true);
  d.outlier = BoolArray::Constant(n_steps, 1, false);
  return d;
}

}  // namespace detail

inline BenchResult run_scaling_bench(const std::vector<Eigen::Index>& sizes,
                                     int repetitions,
                                     const WeightPolicy& policy) {
  KernelSpec spec;
  spec.temporal = TemporalKernel::Matern32;
  spec.temporal_lengthscale = 0.5;
  spec.temporal_amplitude = 1.0;
  spec.noise_variance = 0.09;

  BenchResult result;
  result.sizes = sizes;
  for (Eigen::Index n : sizes) {
    const Dataset data = detail::bench_dataset(n);
    const StateSpaceModel model = assemble_model(spec, data.grid);
    std::vector<double> reps;
    for (int r = -1; r < repetitions; ++r) {  // r = -1 is an untimed warm-up
      TransitionCache cache(model);
      const auto start = std::chrono::steady_clock::now();
      const FilterTrace trace = run_filter(model, cache, data, policy);
      const auto smoothed = run_smoother(trace, cache);
      const auto stop = std::chrono::steady_clock::now();
      if (r >= 0)
        reps.push_back(std::chrono::duration<double>(stop - start).count() +
                       1e-12 * smoothed.back().mean.norm());  // keep it alive
    }
    result.seconds.push_back(reps);
  }

  // Least-squares slope of log fastest time against log size.
  const auto m = static_cast<double>(sizes.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(result.min_seconds(i));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  result.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return result;
}

}  // namespace strcgp
