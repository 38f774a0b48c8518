#include <catch2/catch.hpp>
#include <cmath>

#include "helpers.hpp"
#include "strcgp/kernels.hpp"
#include "strcgp/rng.hpp"
#include "strcgp/ssm.hpp"

using namespace strcgp;

namespace {

KernelSpec temporal_spec(TemporalKernel family, double ell, double amp,
                         double noise = 0.25) {
  KernelSpec s;
  s.temporal = family;
  s.temporal_lengthscale = ell;
  s.temporal_amplitude = amp;
  s.noise_variance = noise;
  return s;
}

KernelSpec spatial_spec(double ell_t, double ell_s) {
  KernelSpec s;
  s.temporal = TemporalKernel::Matern32;
  s.temporal_lengthscale = ell_t;
  s.temporal_amplitude = 1.2;
  s.spatial = SpatialKernel::Matern32;
  s.spatial_lengthscale = ell_s;
  s.spatial_amplitude = 0.9;
  s.noise_variance = 0.1;
  return s;
}

}  // namespace

TEST_CASE("sde blocks reproduce the kernel table rows") {
  SECTION("exponential") {
    const auto b = sde_blocks(temporal_spec(TemporalKernel::Exponential, 2.0, 1.0));
    CHECK(b.nu == 0);
    CHECK(b.drift(0, 0) == Approx(-0.5));
    CHECK(b.diffusion == Approx(1.0));
    CHECK(b.stationary_cov(0, 0) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("matern-3/2 with lambda = 1") {
    const auto b = sde_blocks(
        temporal_spec(TemporalKernel::Matern32, std::sqrt(3.0), 1.0));
    CHECK(b.nu == 1);
    CHECK(b.drift(0, 1) == 1.0);
    CHECK(b.drift(1, 0) == Approx(-1.0));
    CHECK(b.drift(1, 1) == Approx(-2.0));
    CHECK(b.diffusion == Approx(4.0));
    CHECK(b.stationary_cov(0, 0) == Approx(1.0).epsilon(1e-11));
    CHECK(b.stationary_cov(1, 1) == Approx(1.0).epsilon(1e-11));
  }
  SECTION("matern-5/2 satisfies its Lyapunov equation") {
    const auto b =
        sde_blocks(temporal_spec(TemporalKernel::Matern52, 0.7, 1.4));
    CHECK(b.nu == 2);
    const Matrix q =
        b.noise_gain * b.diffusion * b.noise_gain.transpose();
    const Matrix r = b.drift * b.stationary_cov +
                     b.stationary_cov * b.drift.transpose() + q;
    CHECK(r.norm() <= 1e-10 * (q.norm() + 1.0));
    CHECK(b.stationary_cov(0, 0) ==
          Approx(1.4 * 1.4).epsilon(1e-10));  // marginal variance of f
  }
  SECTION("wiener has no steady state") {
    const auto b = sde_blocks(temporal_spec(TemporalKernel::Wiener, 1.0, 2.0));
    CHECK_FALSE(b.stationary);
    CHECK(b.drift(0, 0) == 0.0);
    CHECK(b.diffusion == Approx(4.0));
    CHECK(b.stationary_cov(0, 0) == Approx(1e-6 * 4.0));
  }
}

TEST_CASE("lyapunov residuals vanish across the kernel table") {
  for (auto family : {TemporalKernel::Exponential, TemporalKernel::Matern32,
                      TemporalKernel::Matern52}) {
    for (double ell : {0.1, 0.5, 1.0, 2.0, 5.0}) {
      for (double amp : {0.3, 1.0, 3.0}) {
        const auto b = sde_blocks(temporal_spec(family, ell, amp));
        const Matrix q =
            b.noise_gain * b.diffusion * b.noise_gain.transpose();
        const Matrix r = b.drift * b.stationary_cov +
                         b.stationary_cov * b.drift.transpose() + q;
        REQUIRE(r.norm() <= 1e-10 * (q.norm() + 1.0));
      }
    }
  }
}

TEST_CASE("spatial kernel matrix basics") {
  KernelSpec spec = spatial_spec(1.0, 0.8);
  SECTION("single location") {
    const Matrix k = spatial_kernel_matrix(spec, Matrix::Zero(1, 2));
    CHECK(k(0, 0) == Approx(0.9 * 0.9));
  }
  SECTION("continuity as points coincide") {
    Matrix grid(2, 2);
    grid << 0.0, 0.0, 1e-9, 0.0;
    const Matrix k = spatial_kernel_matrix(spec, grid);
    CHECK(k(0, 1) == Approx(0.9 * 0.9).epsilon(1e-6));
  }
  SECTION("PSD on a small grid") {
    Matrix grid(3, 2);
    grid << 0.0, 0.0, 0.5, 0.1, -0.3, 0.7;
    const Matrix k = spatial_kernel_matrix(spec, grid);
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
  SECTION("duplicate locations are rejected") {
    Matrix grid(2, 2);
    grid << 0.3, 0.3, 0.3, 0.3;
    CHECK_THROWS_AS(spatial_kernel_matrix(spec, grid), DegenerateGrid);
  }
}

TEST_CASE("model assembly") {
  SECTION("purely temporal model is the scalar Kronecker case") {
    const auto spec = temporal_spec(TemporalKernel::Matern32, 1.0, 1.5);
    const auto model = assemble_model(spec, Matrix::Zero(1, 0));
    CHECK(model.state_dim == 2);
    CHECK(model.spatial_cov(0, 0) == 1.0);
    CHECK((model.initial_cov - model.blocks.stationary_cov).norm() <= 1e-12);
  }
  SECTION("selector structure of the measurement matrix") {
    KernelSpec spec = spatial_spec(1.0, 1.0);
    Matrix grid(2, 2);
    grid << 0.0, 0.0, 1.0, 0.0;
    const auto model = assemble_model(spec, grid);
    REQUIRE(model.state_dim == 4);
    Matrix expected(2, 4);
    expected << 1, 0, 0, 0, 0, 0, 1, 0;
    CHECK((model.measurement - expected).norm() == 0.0);
  }
  SECTION("prior marginal of f equals the spatial gram scaled by amplitude") {
    KernelSpec spec = spatial_spec(0.7, 1.3);
    Matrix grid(3, 2);
    grid << 0.0, 0.0, 0.4, -0.2, 1.0, 0.8;
    const auto model = assemble_model(spec, grid);
    const Matrix marginal = model.measurement * model.initial_cov *
                            model.measurement.transpose();
    const Matrix expected =
        model.spatial_cov * (1.2 * 1.2);  // sigma_kt^2
    CHECK(test_helpers::max_rel_err(marginal, expected) <= 1e-10);
  }
}

TEST_CASE("discretisation limits and the scalar analytic case") {
  const auto spec = temporal_spec(TemporalKernel::Exponential, 1.0, 1.0);
  const auto model = assemble_model(spec, Matrix::Zero(1, 0));
  SECTION("analytic one-step values") {
    const Transition tr = discretize(model, 1.0);
    CHECK(tr.transition(0, 0) == Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(tr.process_noise(0, 0) ==
          Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  }
  SECTION("long steps mix to stationarity") {
    const Transition tr = discretize(model, 1e3);
    CHECK(std::abs(tr.transition(0, 0)) <= 1e-300);
    CHECK(tr.process_noise(0, 0) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("short steps stay near the identity") {
    const Transition tr = discretize(model, 1e-8);
    CHECK(tr.transition(0, 0) == Approx(1.0).epsilon(1e-7));
    CHECK(tr.process_noise(0, 0) == Approx(0.0).margin(1e-7));
  }
  SECTION("invalid steps are rejected") {
    CHECK_THROWS_AS(discretize(model, 0.0), InvalidTimeStep);
    CHECK_THROWS_AS(discretize(model, -0.5), InvalidTimeStep);
  }
}

TEST_CASE("wiener discretisation integrates the diffusion") {
  const auto spec = temporal_spec(TemporalKernel::Wiener, 1.0, 1.5);
  const auto model = assemble_model(spec, Matrix::Zero(1, 0));
  const Transition tr = discretize(model, 0.4);
  CHECK(tr.transition(0, 0) == Approx(1.0));
  CHECK(tr.process_noise(0, 0) == Approx(1.5 * 1.5 * 0.4).epsilon(1e-12));
}

TEST_CASE("transition cache memoises by step length") {
  const auto spec = temporal_spec(TemporalKernel::Matern32, 0.5, 1.0);
  const auto model = assemble_model(spec, Matrix::Zero(1, 0));
  TransitionCache cache(model);
  cache.at(0.25);
  cache.at(0.25);
  cache.at(0.5);
  CHECK(cache.size() == 2);
}

TEST_CASE("chained transitions reproduce the closed-form temporal kernels") {
  CounterRng rng(101);
  for (auto family :
       {TemporalKernel::Exponential, TemporalKernel::Matern32}) {
    for (int trial = 0; trial < 10; ++trial) {
      const double ell = rng.uniform(0.2, 2.0);
      const double amp = rng.uniform(0.5, 2.0);
      const auto spec = temporal_spec(family, ell, amp);
      const auto model = assemble_model(spec, Matrix::Zero(1, 0));
      const int n = 2 + static_cast<int>(rng.below(7));
      Vector times(n);
      times[0] = rng.uniform(0.0, 0.3);
      for (int i = 1; i < n; ++i)
        times[i] = times[i - 1] + rng.uniform(0.05, 1.0);
      const Matrix prior = test_helpers::ssm_prior_cov(model, times);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double expected =
              temporal_kernel_value(spec, times[i], times[j]);
          REQUIRE(test_helpers::rel_err(prior(i, j), expected) <= 1e-8);
        }
    }
  }
}

TEST_CASE("separable prior equals the Kronecker of space and time grams") {
  CounterRng rng(202);
  KernelSpec spec = spatial_spec(0.8, 1.1);
  Matrix grid(3, 2);
  grid << 0.0, 0.0, 0.6, -0.4, -0.9, 0.5;
  const auto model = assemble_model(spec, grid);
  const int n = 5;
  Vector times(n);
  times[0] = 0.1;
  for (int i = 1; i < n; ++i) times[i] = times[i - 1] + rng.uniform(0.1, 0.6);
  const Matrix prior = test_helpers::ssm_prior_cov(model, times);
  Matrix k_t(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      k_t(i, j) = temporal_kernel_value(spec, times[i], times[j]);
  const Matrix expected = kronecker(k_t, model.spatial_cov);
  CHECK(test_helpers::max_rel_err(prior, expected) <= 1e-8);
}

TEST_CASE("produced covariances are symmetric with bounded negative eigs") {
  CounterRng rng(303);
  KernelSpec spec = spatial_spec(0.5, 0.9);
  Matrix grid(2, 2);
  grid << 0.0, 0.0, 0.7, 0.7;
  const auto model = assemble_model(spec, grid);
  for (int trial = 0; trial < 20; ++trial) {
    const Transition tr = discretize(model, rng.uniform(1e-4, 3.0));
    CHECK((tr.process_noise - tr.process_noise.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(tr.process_noise);
    CHECK(es.eigenvalues().minCoeff() >=
          -1e-8 * std::max(tr.process_noise.trace(), 1e-300));
  }
}

TEST_CASE("unsupported families fail loudly") {
  KernelSpec spec;
  spec.temporal = static_cast<TemporalKernel>(99);
  spec.temporal_lengthscale = 1.0;
  spec.temporal_amplitude = 1.0;
  spec.noise_variance = 0.1;
  CHECK_THROWS_AS(sde_blocks(spec), UnsupportedKernel);
}
