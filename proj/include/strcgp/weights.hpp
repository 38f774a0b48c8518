#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "strcgp/errors.hpp"
#include "strcgp/linalg.hpp"

namespace strcgp {

struct WeightValue {
  double weight = 0.0;
  double dlogw2 = 0.0;  // d/dy log(w^2)
};

/// Inverse multi-quadric bump weight
///   w(y) = beta * (1 + (y - gamma)^2 / c^2)^alpha,  alpha < 0,
/// together with the derivative of log(w^2) needed by the generalised
/// update. With the default alpha = -1/2 the derivative reduces to
/// -2 (y - gamma) / (c^2 + (y - gamma)^2).
inline WeightValue imq_weight(double y, double gamma, double c, double beta,
                              double alpha = -0.5) {
  if (!(c > 0.0)) throw InvalidShrinkage("imq_weight: c must be positive");
  if (!(beta > 0.0)) throw InvalidInput("imq_weight: beta must be positive");
  if (!(alpha < 0.0)) throw InvalidInput("imq_weight: alpha must be negative");
  const double d = y - gamma;
  WeightValue out;
  out.weight = beta * std::pow(1.0 + d * d / (c * c), alpha);
  out.dlogw2 = 4.0 * alpha * d / (c * c + d * d);
  return out;
}

/// Per-observation weights w and the matching d/dy log(w^2), one entry per
/// spatial site at a single time step.
struct WeightVector {
  Vector w;
  Vector dlogw2;
};

/// Adaptive IMQ weighting: centre the bump at the one-step-ahead predictive
/// mean and let the predictive variance set the shrinkage rate, with
/// beta = sigma/sqrt(2) so a perfectly predicted datum keeps the standard
/// Kalman weight. The shrinkage c^2 is floored at 1e-12 sigma^2 in case the
/// predictive variance ever collapses.
inline WeightVector adaptive_weights(const Vector& y, const Vector& f_hat,
                                     const Vector& s_hat_diag, double sigma,
                                     double alpha = -0.5) {
  const Eigen::Index n = y.size();
  if (f_hat.size() != n || s_hat_diag.size() != n)
    throw InvalidInput("adaptive_weights: size mismatch");
  if ((s_hat_diag.array() <= 0.0).any())
    throw InvalidShrinkage("adaptive_weights: non-positive predictive variance");
  const double beta = sigma / std::sqrt(2.0);
  const double c2_floor = 1e-12 * sigma * sigma;
  WeightVector out;
  out.w.resize(n);
  out.dlogw2.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = std::sqrt(std::max(s_hat_diag[j], c2_floor));
    const WeightValue v = imq_weight(y[j], f_hat[j], c, beta, alpha);
    out.w[j] = v.weight;
    out.dlogw2[j] = v.dlogw2;
  }
  return out;
}

enum class SummaryMode { Quantile, Mean, Min };

/// Linear-interpolation quantile of a weight vector (same convention as the
/// usual "type 7" estimator).
inline double quantile(const Vector& v, double p) {
  if (v.size() == 0) throw InvalidInput("quantile: empty vector");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double summary_stat(const Vector& w, SummaryMode mode, double delta) {
  if (w.size() == 0) throw InvalidInput("summary_stat: empty weight vector");
  switch (mode) {
    case SummaryMode::Quantile:
      if (!(delta > 0.0 && delta < 1.0))
        throw InvalidInput("summary_stat: delta must lie in (0,1)");
      return quantile(w, delta);
    case SummaryMode::Mean:
      return w.mean();
    case SummaryMode::Min:
      return w.minCoeff();
  }
  throw InvalidInput("summary_stat: unknown mode");
}

/// Collapses per-step weight vectors into the scalar summaries used by the
/// robust objective. With a single site the summary is the weight itself
/// (unnormalised); with several sites each step contributes its delta-
/// quantile (or mean/min), normalised so the summaries sum to one. Steps
/// with no observed site get summary 0.
inline Vector summary_weights(const std::vector<Vector>& step_weights,
                              bool spatio_temporal,
                              SummaryMode mode = SummaryMode::Quantile,
                              double delta = 0.05) {
  const Eigen::Index n_t = static_cast<Eigen::Index>(step_weights.size());
  if (n_t == 0) throw InvalidInput("summary_weights: no steps");
  Vector out = Vector::Zero(n_t);
  if (!spatio_temporal) {
    for (Eigen::Index k = 0; k < n_t; ++k)
      out[k] = step_weights[k].size() == 0 ? 0.0 : step_weights[k][0];
    return out;
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < n_t; ++k) {
    if (step_weights[k].size() == 0) continue;
    out[k] = summary_stat(step_weights[k], mode, delta);
    total += out[k];
  }
  if (total > 0.0) out /= total;
  return out;
}

/// Rule producing the per-observation weights fed into the generalised
/// update. Constant recovers the standard Kalman filter; FixedImq evaluates
/// an IMQ whose centre/shrinkage depend only on the current input, matching
/// the batch construction; AdaptiveImq reads both off the filtering
/// predictive.
struct WeightPolicy {
  enum class Kind { Constant, FixedImq, AdaptiveImq };

  Kind kind = Kind::AdaptiveImq;
  double imq_exponent = -0.5;
  std::optional<double> beta;  // defaults to sigma/sqrt(2) at evaluation time

  // FixedImq parameters; gamma_fn, if set, wins over gamma_const.
  double gamma_const = 0.0;
  double c_const = 1.0;
  std::function<double(double t, const Eigen::RowVectorXd& site)> gamma_fn;

  double effective_beta(double sigma) const {
    const double b = beta.value_or(sigma / std::sqrt(2.0));
    if (!(b > 0.0)) throw InvalidInput("WeightPolicy: beta must be positive");
    return b;
  }

  static WeightPolicy constant() {
    WeightPolicy p;
    p.kind = Kind::Constant;
    return p;
  }

  static WeightPolicy adaptive(double alpha = -0.5) {
    WeightPolicy p;
    p.kind = Kind::AdaptiveImq;
    p.imq_exponent = alpha;
    return p;
  }

  static WeightPolicy fixed_imq(double gamma, double c, double alpha = -0.5) {
    WeightPolicy p;
    p.kind = Kind::FixedImq;
    p.gamma_const = gamma;
    p.c_const = c;
    p.imq_exponent = alpha;
    return p;
  }
};

}  // namespace strcgp
