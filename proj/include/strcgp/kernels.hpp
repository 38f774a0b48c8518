#pragma once

#include <cmath>
#include <string>

#include "strcgp/errors.hpp"
#include "strcgp/linalg.hpp"

namespace strcgp {

enum class TemporalKernel { Wiener, Exponential, Matern32, Matern52 };
enum class SpatialKernel { None, SquaredExponential, Matern32 };

/// Declarative description of a separable spatio-temporal kernel
/// kappa((s,t),(s',t')) = kappa_s(s - s') * kappa_t(t - t') together with the
/// observation noise variance. A purely temporal model uses
/// SpatialKernel::None, in which case kappa_s == 1 and the spatial
/// parameters are ignored.
struct KernelSpec {
  TemporalKernel temporal = TemporalKernel::Matern32;
  double temporal_lengthscale = 1.0;  // ell_t, ignored for Wiener
  double temporal_amplitude = 1.0;    // sigma_kt (std-dev scale)
  SpatialKernel spatial = SpatialKernel::None;
  double spatial_lengthscale = 1.0;   // ell_s
  double spatial_amplitude = 1.0;     // sigma_ks
  double noise_variance = 0.1;        // sigma^2

  double noise_sd() const { return std::sqrt(noise_variance); }

  void validate() const {
    if (temporal != TemporalKernel::Wiener && temporal_lengthscale <= 0.0)
      throw InvalidInput("KernelSpec: temporal lengthscale must be positive");
    if (temporal_amplitude <= 0.0)
      throw InvalidInput("KernelSpec: temporal amplitude must be positive");
    if (spatial != SpatialKernel::None) {
      if (spatial_lengthscale <= 0.0)
        throw InvalidInput("KernelSpec: spatial lengthscale must be positive");
      if (spatial_amplitude <= 0.0)
        throw InvalidInput("KernelSpec: spatial amplitude must be positive");
    }
    if (noise_variance <= 0.0)
      throw InvalidInput("KernelSpec: noise variance must be positive");
  }
};

inline std::string to_string(TemporalKernel k) {
  switch (k) {
    case TemporalKernel::Wiener: return "wiener";
    case TemporalKernel::Exponential: return "exponential";
    case TemporalKernel::Matern32: return "matern32";
    case TemporalKernel::Matern52: return "matern52";
  }
  return "?";
}

inline std::string to_string(SpatialKernel k) {
  switch (k) {
    case SpatialKernel::None: return "none";
    case SpatialKernel::SquaredExponential: return "se";
    case SpatialKernel::Matern32: return "matern32";
  }
  return "?";
}

/// Closed-form temporal kernel kappa_t(t1, t2). All families except Wiener
/// are stationary and depend only on |t1 - t2|.
inline double temporal_kernel_value(const KernelSpec& spec, double t1,
                                    double t2) {
  const double s2 = spec.temporal_amplitude * spec.temporal_amplitude;
  const double tau = std::abs(t1 - t2);
  switch (spec.temporal) {
    case TemporalKernel::Wiener:
      return s2 * std::min(t1, t2);
    case TemporalKernel::Exponential:
      return s2 * std::exp(-tau / spec.temporal_lengthscale);
    case TemporalKernel::Matern32: {
      const double lambda = std::sqrt(3.0) / spec.temporal_lengthscale;
      return s2 * (1.0 + lambda * tau) * std::exp(-lambda * tau);
    }
    case TemporalKernel::Matern52: {
      const double lambda = std::sqrt(5.0) / spec.temporal_lengthscale;
      return s2 * (1.0 + lambda * tau + lambda * lambda * tau * tau / 3.0) *
             std::exp(-lambda * tau);
    }
  }
  throw UnsupportedKernel("temporal_kernel_value: unknown family");
}

/// Closed-form spatial kernel kappa_s(s1, s2); returns 1 for
/// SpatialKernel::None so a missing spatial component is the neutral factor
/// of the separable product.
inline double spatial_kernel_value(const KernelSpec& spec,
                                   const Eigen::RowVectorXd& s1,
                                   const Eigen::RowVectorXd& s2) {
  if (spec.spatial == SpatialKernel::None) return 1.0;
  const double s2a = spec.spatial_amplitude * spec.spatial_amplitude;
  const double r = (s1 - s2).norm();
  switch (spec.spatial) {
    case SpatialKernel::SquaredExponential: {
      const double u = r / spec.spatial_lengthscale;
      return s2a * std::exp(-0.5 * u * u);
    }
    case SpatialKernel::Matern32: {
      const double u = std::sqrt(3.0) * r / spec.spatial_lengthscale;
      return s2a * (1.0 + u) * std::exp(-u);
    }
    default:
      break;
  }
  throw UnsupportedKernel("spatial_kernel_value: unknown family");
}

inline double kernel_value(const KernelSpec& spec, double t1,
                           const Eigen::RowVectorXd& s1, double t2,
                           const Eigen::RowVectorXd& s2) {
  return temporal_kernel_value(spec, t1, t2) *
         spatial_kernel_value(spec, s1, s2);
}

/// Gram matrix of the spatial kernel over a set of locations (rows of
/// `grid`). Duplicate locations are rejected: they make the grid degenerate
/// for the state-space construction.
inline Matrix spatial_kernel_matrix(const KernelSpec& spec,
                                    const Matrix& grid) {
  const Eigen::Index n = grid.rows();
  if (n < 1) throw InvalidInput("spatial_kernel_matrix: empty grid");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if ((grid.row(i) - grid.row(j)).norm() == 0.0)
        throw DegenerateGrid("spatial_kernel_matrix: duplicate locations " +
                             std::to_string(i) + " and " + std::to_string(j));
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      k(i, j) = spatial_kernel_value(spec, grid.row(i), grid.row(j));
      k(j, i) = k(i, j);
    }
  }
  return k;
}

}  // namespace strcgp
