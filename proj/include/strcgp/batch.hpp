#pragma once

#include <vector>

#include "strcgp/data.hpp"
#include "strcgp/kernels.hpp"
#include "strcgp/linalg.hpp"
#include "strcgp/weights.hpp"

namespace strcgp {

/// Joint Gaussian posterior of f over every (time, site) node of a dataset,
/// stacked step-major: node index = k * n_sites + j.
struct BatchPosterior {
  Vector mean;
  Matrix cov;

  Matrix mean_by_step(Eigen::Index n_t, Eigen::Index n_s) const {
    Matrix m(n_t, n_s);
    for (Eigen::Index k = 0; k < n_t; ++k)
      for (Eigen::Index j = 0; j < n_s; ++j) m(k, j) = mean[k * n_s + j];
    return m;
  }
  Matrix var_by_step(Eigen::Index n_t, Eigen::Index n_s) const {
    Matrix v(n_t, n_s);
    for (Eigen::Index k = 0; k < n_t; ++k)
      for (Eigen::Index j = 0; j < n_s; ++j)
        v(k, j) = cov(k * n_s + j, k * n_s + j);
    return v;
  }
};

/// Dense prior covariance of f over all nodes of the dataset.
inline Matrix prior_covariance(const KernelSpec& spec, const Dataset& data) {
  const Eigen::Index n_t = data.n_steps();
  const Eigen::Index n_s = data.n_sites();
  const Eigen::Index n = n_t * n_s;
  Matrix k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::Index ka = a / n_s, ja = a % n_s;
    for (Eigen::Index b = a; b < n; ++b) {
      const Eigen::Index kb = b / n_s, jb = b % n_s;
      k(a, b) = kernel_value(spec, data.times[ka], data.grid.row(ja),
                             data.times[kb], data.grid.row(jb));
      k(b, a) = k(a, b);
    }
  }
  return k;
}

namespace detail {

inline std::vector<Eigen::Index> observed_nodes(const Dataset& data) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j)
      if (data.observed(k, j)) idx.push_back(k * data.n_sites() + j);
  return idx;
}

// Posterior over all nodes given observation precision structure
// R = noise covariance (diagonal) on the observed nodes and a shifted
// observation vector. Cubic in the number of observed nodes.
inline BatchPosterior condition(const Matrix& prior,
                                const std::vector<Eigen::Index>& obs,
                                const Vector& shifted_y,
                                const Vector& r_diag) {
  const Eigen::Index n = prior.rows();
  const auto n_o = static_cast<Eigen::Index>(obs.size());
  Matrix k_oo(n_o, n_o);
  Matrix k_ao(n, n_o);
  for (Eigen::Index a = 0; a < n_o; ++a) {
    for (Eigen::Index b = 0; b < n_o; ++b) k_oo(a, b) = prior(obs[a], obs[b]);
    k_ao.col(a) = prior.col(obs[a]);
  }
  Matrix gram = k_oo;
  gram.diagonal() += r_diag;
  PsdSolveResult solve = psd_solve(gram, Matrix::Identity(n_o, n_o));
  const Matrix gram_inv = solve.solution;
  BatchPosterior out;
  out.mean = k_ao * (gram_inv * shifted_y);
  out.cov = symmetrize(prior - k_ao * gram_inv * k_ao.transpose());
  return out;
}

}  // namespace detail

/// Closed-form GP regression posterior (zero prior mean) over all nodes,
/// conditioned on the observed entries.
inline BatchPosterior batch_gp(const KernelSpec& spec, const Dataset& data) {
  data.validate();
  spec.validate();
  const Matrix prior = prior_covariance(spec, data);
  const auto obs = detail::observed_nodes(data);
  if (obs.empty()) throw InvalidInput("batch_gp: no observed data");
  const auto n_o = static_cast<Eigen::Index>(obs.size());
  Vector y_o(n_o);
  for (Eigen::Index a = 0; a < n_o; ++a)
    y_o[a] = data.y(obs[a] / data.n_sites(), obs[a] % data.n_sites());
  const Vector r_diag = Vector::Constant(n_o, spec.noise_variance);
  return detail::condition(prior, obs, y_o, r_diag);
}

/// Closed-form robust-and-conjugate posterior with fixed per-datum weights:
/// the gram matrix picks up sigma^2 J_w = diag(sigma^4/2 w^-2) instead of
/// sigma^2 I, and the data are shifted by sigma^2 d/dy log(w^2). Weights
/// w(k, j) and dlogw2(k, j) must be supplied for every observed node.
inline BatchPosterior batch_rcgp(const KernelSpec& spec, const Dataset& data,
                                 const Matrix& w, const Matrix& dlogw2) {
  data.validate();
  spec.validate();
  if (w.rows() != data.n_steps() || w.cols() != data.n_sites() ||
      dlogw2.rows() != data.n_steps() || dlogw2.cols() != data.n_sites())
    throw InvalidInput("batch_rcgp: weight shape mismatch");
  const Matrix prior = prior_covariance(spec, data);
  const auto obs = detail::observed_nodes(data);
  if (obs.empty()) throw InvalidInput("batch_rcgp: no observed data");
  const auto n_o = static_cast<Eigen::Index>(obs.size());
  const double sigma2 = spec.noise_variance;
  Vector y_shift(n_o), r_diag(n_o);
  for (Eigen::Index a = 0; a < n_o; ++a) {
    const Eigen::Index k = obs[a] / data.n_sites();
    const Eigen::Index j = obs[a] % data.n_sites();
    if (!(w(k, j) > 0.0))
      throw InvalidInput("batch_rcgp: weights must be positive");
    y_shift[a] = data.y(k, j) - sigma2 * dlogw2(k, j);
    r_diag[a] = 0.5 * sigma2 * sigma2 / (w(k, j) * w(k, j));
  }
  return detail::condition(prior, obs, y_shift, r_diag);
}

}  // namespace strcgp
