#pragma once

#include <cmath>
#include <vector>

#include "strcgp/data.hpp"
#include "strcgp/filtering.hpp"
#include "strcgp/linalg.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"

namespace strcgp {

inline double rmse(const Vector& y_true, const Vector& y_hat) {
  if (y_true.size() == 0 || y_true.size() != y_hat.size())
    throw InvalidInput("rmse: empty or mismatched inputs");
  return std::sqrt((y_true - y_hat).squaredNorm() /
                   static_cast<double>(y_true.size()));
}

/// Mean negative log density of y under per-point Gaussians N(mean, var).
inline double nlpd(const Vector& y, const Vector& mean, const Vector& var) {
  const Eigen::Index n = y.size();
  if (n == 0 || mean.size() != n || var.size() != n)
    throw InvalidInput("nlpd: empty or mismatched inputs");
  if ((var.array() <= 0.0).any())
    throw InvalidInput("nlpd: variances must be positive");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = y[i] - mean[i];
    total += 0.5 * (std::log(2.0 * M_PI * var[i]) + r * r / var[i]);
  }
  return total / static_cast<double>(n);
}

/// Expected weight ratio: mean of w / (sigma/sqrt(2)) over every observed
/// (step, site) pair. Equals 1 exactly for the constant policy and is
/// bounded by 1 for any IMQ policy with the default beta.
inline double ewr(const FilterTrace& trace, double sigma) {
  const double ref = sigma / std::sqrt(2.0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& step : trace.steps)
    for (std::size_t j = 0; j < step.observed.size(); ++j)
      if (step.observed[j]) {
        total += step.weights.w[static_cast<Eigen::Index>(j)] / ref;
        ++count;
      }
  if (count == 0) throw InvalidInput("ewr: trace has no observed data");
  return total / static_cast<double>(count);
}

/// Inverse standard normal CDF (Acklam's rational approximation polished
/// with one Halley step; good to ~1e-15 over (0,1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw InvalidInput("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the CDF error.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

struct CoveragePoint {
  double nominal = 0.0;
  double empirical = 0.0;
};

/// Fraction of points inside the central interval mean +/- z sd, where z
/// matches the nominal two-sided quantile q.
inline std::vector<CoveragePoint> coverage(const Vector& y,
                                           const Vector& mean,
                                           const Vector& sd,
                                           const std::vector<double>& qs) {
  const Eigen::Index n = y.size();
  if (n == 0 || mean.size() != n || sd.size() != n)
    throw InvalidInput("coverage: empty or mismatched inputs");
  if ((sd.array() <= 0.0).any())
    throw InvalidInput("coverage: sd must be positive");
  std::vector<CoveragePoint> out;
  out.reserve(qs.size());
  for (double q : qs) {
    const double z = normal_quantile(0.5 * (1.0 + q));
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(y[i] - mean[i]) <= z * sd[i]) ++inside;
    out.push_back({q, static_cast<double>(inside) / static_cast<double>(n)});
  }
  return out;
}

/// KL( N(mean_p, cov_p) || N(mean_q, cov_q) ), clamped at zero against
/// roundoff.
inline double kl_gaussian(const Vector& mean_p, const Matrix& cov_p,
                          const Vector& mean_q, const Matrix& cov_q) {
  const Eigen::Index d = mean_p.size();
  if (mean_q.size() != d || cov_p.rows() != d || cov_q.rows() != d)
    throw InvalidInput("kl_gaussian: dimension mismatch");
  SpdFactor fq(cov_q);
  SpdFactor fp(cov_p);
  const double trace_term = fq.solve(cov_p).trace();
  const Vector dm = mean_q - mean_p;
  const double quad = dm.dot(fq.solve(dm));
  const double logdet = fq.log_det() - fp.log_det();
  const double kl =
      0.5 * (trace_term + quad - static_cast<double>(d) + logdet);
  return std::max(kl, 0.0);
}

/// Posterior influence of a single contaminated observation, as a function
/// of the contamination magnitude. For each magnitude the observation at
/// (step, site) is shifted by that amount, the filter and smoother are
/// rerun, and the divergence against the clean posterior is summed over the
/// per-step smoothed marginals of f. A magnitude of zero reproduces the
/// clean dataset, so its influence is identically zero.
struct PifCurve {
  std::vector<double> magnitudes;
  std::vector<double> values;
};

inline PifCurve pif_curve(const KernelSpec& spec, const Dataset& data,
                          const WeightPolicy& policy, Eigen::Index step,
                          Eigen::Index site,
                          const std::vector<double>& magnitudes) {
  data.validate();
  if (step < 0 || step >= data.n_steps() || site < 0 ||
      site >= data.n_sites() || !data.observed(step, site))
    throw InvalidInput("pif_curve: contamination site must be observed");

  const StateSpaceModel model = assemble_model(spec, data.grid);

  const auto smoothed_marginals = [&](const Dataset& d) {
    TransitionCache cache(model);
    const FilterTrace trace = run_filter(model, cache, d, policy);
    const auto smoothed = run_smoother(trace, cache);
    std::vector<std::pair<Vector, Matrix>> out;
    out.reserve(smoothed.size());
    for (const auto& s : smoothed) {
      Matrix cov = symmetrize(model.measurement * s.cov *
                              model.measurement.transpose());
      cov.diagonal().array() += 1e-12;  // keeps tiny marginals factorable
      out.emplace_back(model.measurement * s.mean, std::move(cov));
    }
    return out;
  };

  const auto clean = smoothed_marginals(data);

  PifCurve curve;
  for (double magnitude : magnitudes) {
    curve.magnitudes.push_back(magnitude);
    if (magnitude == 0.0) {
      curve.values.push_back(0.0);
      continue;
    }
    Dataset contaminated = data;
    contaminated.y(step, site) += magnitude;
    const auto dirty = smoothed_marginals(contaminated);
    double total = 0.0;
    for (std::size_t k = 0; k < clean.size(); ++k)
      total += kl_gaussian(clean[k].first, clean[k].second, dirty[k].first,
                           dirty[k].second);
    curve.values.push_back(total);
  }
  return curve;
}

struct MetricReport {
  double rmse = 0.0;
  double nlpd = 0.0;
  double ewr = 0.0;
  std::vector<CoveragePoint> coverage;
};

}  // namespace strcgp
