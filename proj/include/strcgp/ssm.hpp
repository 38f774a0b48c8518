#pragma once

#include <cmath>
#include <map>

#include "strcgp/kernels.hpp"
#include "strcgp/linalg.hpp"

namespace strcgp {

/// Temporal SDE blocks of a kernel: dz = F_t z dt + L_t dW with white-noise
/// spectral density Q_ct, plus the steady-state covariance of z. The state
/// holds f and its first `nu` time derivatives at one location.
struct SdeBlocks {
  Matrix drift;           // F_t, (nu+1) x (nu+1)
  Matrix noise_gain;      // L_t, (nu+1) x 1
  double diffusion = 0.0; // Q_ct
  int nu = 0;
  Matrix stationary_cov;  // Sigma_inf_t; eps-scaled identity for Wiener
  bool stationary = true; // false for Wiener (drift is not Hurwitz)
};

/// SDE matrices per temporal family. Stationary families get their
/// steady-state covariance from the continuous Lyapunov equation
/// F S + S F^T + L Q_c L^T = 0. The Wiener process has no steady state; its
/// initial covariance follows the convention of pinning the process at the
/// first timestamp with variance 1e-6 * sigma_kt^2.
inline SdeBlocks sde_blocks(const KernelSpec& spec) {
  spec.validate();
  SdeBlocks b;
  const double amp2 = spec.temporal_amplitude * spec.temporal_amplitude;
  const double ell = spec.temporal_lengthscale;
  switch (spec.temporal) {
    case TemporalKernel::Wiener: {
      b.nu = 0;
      b.drift = Matrix::Zero(1, 1);
      b.noise_gain = Matrix::Ones(1, 1);
      b.diffusion = amp2;
      b.stationary = false;
      b.stationary_cov = 1e-6 * amp2 * Matrix::Identity(1, 1);
      return b;
    }
    case TemporalKernel::Exponential: {
      b.nu = 0;
      b.drift = Matrix::Constant(1, 1, -1.0 / ell);
      b.noise_gain = Matrix::Ones(1, 1);
      b.diffusion = 2.0 * amp2 / ell;
      break;
    }
    case TemporalKernel::Matern32: {
      const double lambda = std::sqrt(3.0) / ell;
      b.nu = 1;
      b.drift.resize(2, 2);
      b.drift << 0.0, 1.0, -lambda * lambda, -2.0 * lambda;
      b.noise_gain = Matrix::Zero(2, 1);
      b.noise_gain(1, 0) = 1.0;
      b.diffusion = 4.0 * std::pow(lambda, 3) * amp2;
      break;
    }
    case TemporalKernel::Matern52: {
      const double lambda = std::sqrt(5.0) / ell;
      b.nu = 2;
      b.drift = Matrix::Zero(3, 3);
      b.drift(0, 1) = 1.0;
      b.drift(1, 2) = 1.0;
      b.drift(2, 0) = -std::pow(lambda, 3);
      b.drift(2, 1) = -3.0 * lambda * lambda;
      b.drift(2, 2) = -3.0 * lambda;
      b.noise_gain = Matrix::Zero(3, 1);
      b.noise_gain(2, 0) = 1.0;
      b.diffusion = 16.0 * amp2 * std::pow(lambda, 5) / 3.0;
      break;
    }
    default:
      throw UnsupportedKernel("sde_blocks: unsupported temporal family");
  }
  const Matrix q =
      b.noise_gain * b.diffusion * b.noise_gain.transpose();
  b.stationary_cov = solve_lyapunov(b.drift, q);
  return b;
}

/// Discrete state-space form of a separable spatio-temporal GP on a fixed
/// spatial grid. The joint state stacks one SDE block per location
/// (site-major), so F = I (x) F_t, the measurement matrix H picks out the
/// function value of each block, and Sigma0 = K_s (x) Sigma_inf_t.
struct StateSpaceModel {
  KernelSpec spec;
  SdeBlocks blocks;
  Matrix grid;         // n_s x d_s locations
  Matrix spatial_cov;  // K_s, n_s x n_s
  Matrix measurement;  // H, n_s x state_dim
  Matrix initial_cov;  // Sigma0, state_dim x state_dim
  Eigen::Index n_sites = 0;
  Eigen::Index state_dim = 0;
};

inline StateSpaceModel assemble_model(const KernelSpec& spec,
                                      const Matrix& grid) {
  StateSpaceModel m;
  m.spec = spec;
  m.blocks = sde_blocks(spec);
  m.grid = grid;
  m.n_sites = grid.rows();
  if (m.n_sites < 1) throw InvalidInput("assemble_model: empty grid");
  if (spec.spatial == SpatialKernel::None && m.n_sites != 1)
    throw InvalidInput(
        "assemble_model: a purely temporal model requires a single site");
  const Eigen::Index block = m.blocks.nu + 1;
  m.state_dim = m.n_sites * block;
  m.spatial_cov = spec.spatial == SpatialKernel::None
                      ? Matrix::Ones(1, 1)
                      : spatial_kernel_matrix(spec, grid);
  m.measurement = Matrix::Zero(m.n_sites, m.state_dim);
  for (Eigen::Index j = 0; j < m.n_sites; ++j)
    m.measurement(j, j * block) = 1.0;
  m.initial_cov = kronecker(m.spatial_cov, m.blocks.stationary_cov);
  return m;
}

/// One discretised step: z_k = A z_{k-1} + q, q ~ N(0, Sigma).
struct Transition {
  Matrix transition;     // A
  Matrix process_noise;  // Sigma
  double dt = 0.0;
};

/// Discretises the SSM over a step of length dt. The matrix exponential is
/// taken blockwise on F_t and lifted through the Kronecker structure, which
/// keeps the cost cubic in the block size rather than the full state size.
/// For stationary kernels the process noise uses the steady-state shortcut
/// Sigma_t = Sigma_inf - A_t Sigma_inf A_t^T; the Wiener block integrates
/// its constant diffusion exactly.
inline Transition discretize(const StateSpaceModel& model, double dt) {
  if (!(dt > 0.0)) throw InvalidTimeStep("discretize: dt must be positive");
  const Matrix a_t = matrix_exponential(model.blocks.drift, dt);
  Matrix sigma_t;
  if (model.blocks.stationary) {
    const Matrix& s_inf = model.blocks.stationary_cov;
    sigma_t = clamp_psd(s_inf - a_t * s_inf * a_t.transpose());
  } else {
    // F_t = 0, L_t = 1: the integrated noise is just Q_ct * dt.
    sigma_t = Matrix::Constant(1, 1, model.blocks.diffusion * dt);
  }
  Transition tr;
  tr.dt = dt;
  tr.transition = kronecker(
      Matrix::Identity(model.n_sites, model.n_sites), a_t);
  tr.process_noise = symmetrize(kronecker(model.spatial_cov, sigma_t));
  return tr;
}

/// Memoises transitions by exact step length; regular time grids hit a
/// single entry.
class TransitionCache {
 public:
  explicit TransitionCache(const StateSpaceModel& model) : model_(&model) {}

  const Transition& at(double dt) {
    auto it = memo_.find(dt);
    if (it == memo_.end())
      it = memo_.emplace(dt, discretize(*model_, dt)).first;
    return it->second;
  }

  const StateSpaceModel& model() const { return *model_; }
  std::size_t size() const { return memo_.size(); }

 private:
  const StateSpaceModel* model_;
  std::map<double, Transition> memo_;
};

}  // namespace strcgp
