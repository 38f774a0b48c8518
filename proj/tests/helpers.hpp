#pragma once

#include <algorithm>
#include <cmath>

#include "strcgp/linalg.hpp"
#include "strcgp/rng.hpp"

namespace test_helpers {

using strcgp::Matrix;
using strcgp::Vector;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

inline double max_rel_err(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, rel_err(a(i, j), b(i, j)));
  return worst;
}

inline Matrix random_matrix(strcgp::CounterRng& rng, int rows, int cols,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Matrix random_spd(strcgp::CounterRng& rng, int dim) {
  const Matrix a = random_matrix(rng, dim, dim);
  return a * a.transpose() + 0.1 * Matrix::Identity(dim, dim);
}

// Gershgorin shift makes every eigenvalue real part strictly negative.
inline Matrix random_stable(strcgp::CounterRng& rng, int dim) {
  Matrix a = random_matrix(rng, dim, dim);
  const double shift = a.cwiseAbs().rowwise().sum().maxCoeff() + 0.1;
  a.diagonal().array() -= shift;
  return a;
}

// Truncated Taylor series of exp(A); independent of the production path.
inline Matrix expm_taylor(const Matrix& a, int terms = 30) {
  Matrix sum = Matrix::Identity(a.rows(), a.cols());
  Matrix term = sum;
  for (int k = 1; k <= terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

}  // namespace test_helpers

#include "strcgp/data.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"

namespace test_helpers {

// Prior covariance of the stacked f values over a time grid, built by
// chaining state transitions; the independent route the closed-form kernel
// matrices are checked against. Blocks are step-major.
inline Matrix ssm_prior_cov(const strcgp::StateSpaceModel& model,
                            const Vector& times) {
  strcgp::TransitionCache cache(model);
  const Eigen::Index n = times.size();
  std::vector<Matrix> diag(n);
  diag[0] = model.initial_cov;
  for (Eigen::Index i = 1; i < n; ++i) {
    const strcgp::Transition& tr = cache.at(times[i] - times[i - 1]);
    diag[i] = tr.transition * diag[i - 1] * tr.transition.transpose() +
              tr.process_noise;
  }
  Matrix out(n * model.n_sites, n * model.n_sites);
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix cross = diag[i];  // Cov(z_i, z_j), extended over j >= i
    for (Eigen::Index j = i; j < n; ++j) {
      if (j > i) {
        const strcgp::Transition& tr = cache.at(times[j] - times[j - 1]);
        cross = cross * tr.transition.transpose();
      }
      const Matrix f_block = model.measurement * cross.transpose() *
                             model.measurement.transpose();
      out.block(j * model.n_sites, i * model.n_sites, model.n_sites,
                model.n_sites) = f_block;
      out.block(i * model.n_sites, j * model.n_sites, model.n_sites,
                model.n_sites) = f_block.transpose();
    }
  }
  return out;
}

struct RandomInstance {
  strcgp::KernelSpec spec;
  strcgp::Dataset data;
};

// Small random regression problems for the sequential-vs-batch checks.
inline RandomInstance random_instance(strcgp::CounterRng& rng,
                                      bool allow_spatial = true,
                                      bool with_mask = false) {
  RandomInstance inst;
  auto& spec = inst.spec;
  spec.temporal = rng.below(2) == 0 ? strcgp::TemporalKernel::Exponential
                                    : strcgp::TemporalKernel::Matern32;
  spec.temporal_lengthscale = rng.uniform(0.3, 2.0);
  spec.temporal_amplitude = rng.uniform(0.5, 2.0);
  spec.noise_variance = rng.uniform(0.04, 0.5);

  int n_s = 1;
  if (allow_spatial && rng.below(2) == 0) {
    spec.spatial = rng.below(2) == 0
                       ? strcgp::SpatialKernel::Matern32
                       : strcgp::SpatialKernel::SquaredExponential;
    spec.spatial_lengthscale = rng.uniform(0.5, 2.0);
    spec.spatial_amplitude = rng.uniform(0.5, 1.5);
    n_s = 1 + static_cast<int>(rng.below(3));
  }

  auto& data = inst.data;
  if (spec.spatial == strcgp::SpatialKernel::None) {
    data.grid = Matrix::Zero(1, 0);
  } else {
    data.grid.resize(n_s, 2);
    for (int j = 0; j < n_s; ++j) {
      data.grid(j, 0) = rng.uniform(-1.0, 1.0);
      data.grid(j, 1) = rng.uniform(-1.0, 1.0);
    }
  }

  const int n_t = 2 + static_cast<int>(rng.below(9));
  data.times.resize(n_t);
  data.times[0] = rng.uniform(0.0, 0.5);
  for (int k = 1; k < n_t; ++k)
    data.times[k] = data.times[k - 1] + rng.uniform(0.1, 0.8);

  data.y.resize(n_t, n_s);
  for (int k = 0; k < n_t; ++k)
    for (int j = 0; j < n_s; ++j)
      data.y(k, j) = rng.normal(0.0, spec.temporal_amplitude);
  data.observed = strcgp::BoolArray::Constant(n_t, n_s, true);
  if (with_mask) {
    bool any = false;
    for (int k = 0; k < n_t; ++k)
      for (int j = 0; j < n_s; ++j) {
        data.observed(k, j) = rng.uniform() < 0.85;
        any = any || data.observed(k, j);
      }
    if (!any) data.observed(0, 0) = true;
  }
  data.outlier = strcgp::BoolArray::Constant(n_t, n_s, false);
  data.provenance = "random_instance";
  return inst;
}

// Weight and d/dy log(w^2) matrices of a fixed IMQ policy, evaluated the
// way the batch construction expects them.
inline std::pair<Matrix, Matrix> fixed_imq_tables(
    const strcgp::Dataset& data, const strcgp::WeightPolicy& policy,
    double sigma) {
  const double beta = policy.effective_beta(sigma);
  Matrix w = Matrix::Ones(data.n_steps(), data.n_sites());
  Matrix dlogw2 = Matrix::Zero(data.n_steps(), data.n_sites());
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
      if (!data.observed(k, j)) continue;
      const double gamma =
          policy.gamma_fn ? policy.gamma_fn(data.times[k], data.grid.row(j))
                          : policy.gamma_const;
      const auto v = strcgp::imq_weight(data.y(k, j), gamma, policy.c_const,
                                        beta, policy.imq_exponent);
      w(k, j) = v.weight;
      dlogw2(k, j) = v.dlogw2;
    }
  return {w, dlogw2};
}

}  // namespace test_helpers
