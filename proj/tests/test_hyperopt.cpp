#include <catch2/catch.hpp>
#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "strcgp/data.hpp"
#include "strcgp/hyperopt.hpp"

using namespace strcgp;

namespace {

Dataset temporal_dataset(const Vector& times, const Vector& y) {
  Dataset d;
  d.times = times;
  d.grid = Matrix::Zero(1, 0);
  d.y = y;
  d.observed = BoolArray::Constant(times.size(), 1, true);
  d.outlier = BoolArray::Constant(times.size(), 1, false);
  return d;
}

KernelSpec exp_spec(double ell, double amp, double noise) {
  KernelSpec s;
  s.temporal = TemporalKernel::Exponential;
  s.temporal_lengthscale = ell;
  s.temporal_amplitude = amp;
  s.noise_variance = noise;
  return s;
}

// Five-point stencil, the independent check on the optimiser's two-point
// central difference.
double stencil_gradient(const std::function<double(const Vector&)>& f,
                        const Vector& x, Eigen::Index i, double h) {
  Vector xp = x, xpp = x, xm = x, xmm = x;
  xp[i] += h;
  xpp[i] += 2.0 * h;
  xm[i] -= h;
  xmm[i] -= 2.0 * h;
  return (-f(xpp) + 8.0 * f(xp) - 8.0 * f(xm) + f(xmm)) / (12.0 * h);
}

}  // namespace

TEST_CASE("phi single-step closed form") {
  const double amp = 1.3, noise = 0.4, y0 = 0.9;
  const KernelSpec spec = exp_spec(1.0, amp, noise);
  const Dataset d =
      temporal_dataset(Vector::Constant(1, 0.0), Vector::Constant(1, y0));
  const double s = amp * amp + noise;  // prior variance of y at the start
  const double expected = 0.5 * (std::log(2.0 * M_PI * s) + y0 * y0 / s);
  CHECK(phi(spec, d, WeightPolicy::constant()).value ==
        Approx(expected).epsilon(1e-12));
}

TEST_CASE("phi is deterministic") {
  CounterRng rng(71);
  const auto inst = test_helpers::random_instance(rng, true);
  const double a = phi(inst.spec, inst.data, WeightPolicy::adaptive()).value;
  const double b = phi(inst.spec, inst.data, WeightPolicy::adaptive()).value;
  CHECK(a == b);
}

TEST_CASE("phi_gb requires the adaptive policy") {
  CounterRng rng(73);
  const auto inst = test_helpers::random_instance(rng, false);
  CHECK_THROWS_AS(phi_gb(inst.spec, inst.data, WeightPolicy::constant()),
                  InvalidInput);
}

TEST_CASE("phi_gb reduces to phi under perfect prediction") {
  // All-zero data keeps every predictive mean at zero, so each adaptive
  // weight sits at its cap beta = sigma/sqrt(2), every relative summary
  // weight is one, and the two objectives coincide.
  const KernelSpec spec = exp_spec(0.8, 1.1, 0.25);
  const int n = 12;
  const Dataset d = temporal_dataset(Vector::LinSpaced(n, 0.0, 2.0),
                                     Vector::Zero(n));
  const double p = phi(spec, d, WeightPolicy::adaptive()).value;
  const auto gb = phi_gb(spec, d, WeightPolicy::adaptive());
  CHECK(gb.value == Approx(p).epsilon(1e-12));
}

TEST_CASE("spatio-temporal summary weights are normalised inside phi_gb") {
  GeneratorConfig config = GeneratorConfig::st_quadratic(3);
  config.grid_per_axis = 4;
  const Dataset d = gen_spatiotemporal(config);
  KernelSpec spec;
  spec.temporal = TemporalKernel::Matern32;
  spec.temporal_lengthscale = 0.3;
  spec.temporal_amplitude = 0.8;
  spec.spatial = SpatialKernel::Matern32;
  spec.spatial_lengthscale = 0.8;
  spec.spatial_amplitude = 1.0;
  spec.noise_variance = 0.04;
  const auto rep = phi_gb(spec, d, WeightPolicy::adaptive());
  CHECK(rep.step_summary_weights.sum() == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("contaminated steps carry less summary weight than clean ones") {
  const Dataset d = gen_temporal(GeneratorConfig::temporal_matern(9));
  KernelSpec spec;
  spec.temporal = TemporalKernel::Matern32;
  spec.temporal_lengthscale = 0.1;
  spec.temporal_amplitude = std::sqrt(2.0);
  spec.noise_variance = 0.25;
  const auto rep = phi_gb(spec, d, WeightPolicy::adaptive());
  double best_outlier = 0.0;
  double clean_total = 0.0;
  int clean_count = 0;
  for (Eigen::Index k = 0; k < d.n_steps(); ++k) {
    if (d.outlier(k, 0)) {
      best_outlier = std::max(best_outlier, rep.step_summary_weights[k]);
    } else {
      clean_total += rep.step_summary_weights[k];
      ++clean_count;
    }
  }
  CHECK(best_outlier < clean_total / clean_count);
}

TEST_CASE("phi prefers the generating parameters to a x10 lengthscale") {
  int better = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratorConfig config = GeneratorConfig::temporal_matern(seed);
    config.outlier_rate = 0.0;
    const Dataset d = gen_temporal(config);
    KernelSpec truth;
    truth.temporal = TemporalKernel::Matern32;
    truth.temporal_lengthscale = 0.1;
    truth.temporal_amplitude = std::sqrt(2.0);
    truth.noise_variance = 0.25;
    KernelSpec stretched = truth;
    stretched.temporal_lengthscale *= 10.0;
    const double at_truth = phi(truth, d, WeightPolicy::constant()).value;
    const double at_stretched =
        phi(stretched, d, WeightPolicy::constant()).value;
    better += at_truth <= at_stretched;
  }
  CHECK(better > 10);  // majority of the 20 seeds
}

TEST_CASE("adam finds the minimum of a convex quadratic") {
  Vector target(3);
  target << 0.7, -1.2, 0.3;
  const auto objective = [&](const Vector& x) {
    return 0.5 * (x - target).squaredNorm();
  };
  AdamSettings settings;
  settings.steps = 200;
  settings.learning_rate = 0.3;
  const auto res = adam_minimize(objective, Vector::Zero(3), settings);
  CHECK((res.x_best - target).lpNorm<Eigen::Infinity>() <= 1e-3);
}

TEST_CASE("zero learning rate leaves the start untouched") {
  const auto objective = [](const Vector& x) { return x.squaredNorm(); };
  AdamSettings settings;
  settings.learning_rate = 0.0;
  settings.steps = 25;
  Vector x0(2);
  x0 << 1.0, -2.0;
  const auto res = adam_minimize(objective, x0, settings);
  CHECK((res.x_best - x0).norm() == 0.0);
}

TEST_CASE("best-so-far objective never increases") {
  CounterRng rng(79);
  const auto inst = test_helpers::random_instance(rng, false);
  ThetaVector theta = ThetaVector::from_spec(inst.spec);
  AdamSettings settings;
  settings.steps = 15;
  const auto res = fit(inst.spec, theta, inst.data,
                       WeightPolicy::adaptive(), ObjectiveKind::Standard,
                       settings);
  for (std::size_t i = 1; i < res.best_trace.size(); ++i)
    REQUIRE(res.best_trace[i] <= res.best_trace[i - 1] + 1e-15);
}

TEST_CASE("non-finite start aborts immediately") {
  const auto objective = [](const Vector&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(adam_minimize(objective, Vector::Zero(1), {}),
                  InvalidStart);
}

TEST_CASE("persistent non-finite regions abort after one fd halving") {
  // Objective is finite only on a narrow shelf around the start; any Adam
  // step escapes it, so the guard halves once and then gives up.
  const auto objective = [](const Vector& x) {
    if (std::abs(x[0]) > 0.05)
      return std::numeric_limits<double>::quiet_NaN();
    return x[0] * x[0];
  };
  AdamSettings settings;
  settings.learning_rate = 1.0;
  settings.steps = 20;
  const auto res =
      adam_minimize(objective, Vector::Constant(1, 0.04), settings);
  CHECK(res.aborted);
  CHECK_FALSE(res.abort_reason.empty());
  CHECK(std::isfinite(res.f_best));
}

TEST_CASE("central differences agree with the five-point stencil") {
  CounterRng rng(83);
  const auto inst = test_helpers::random_instance(rng, false);
  ThetaVector theta = ThetaVector::from_spec(inst.spec);
  const auto objective = [&](const Vector& x) {
    ThetaVector t = theta;
    t.set_active(x);
    return phi(t.apply_to(inst.spec), inst.data, WeightPolicy::adaptive())
        .value;
  };
  const Vector x0 = theta.active();
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double h = 1e-4 * std::max(1.0, std::abs(x0[i]));
    Vector xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double central = (objective(xp) - objective(xm)) / (2.0 * h);
    const double stencil = stencil_gradient(objective, x0, i, h);
    REQUIRE(test_helpers::rel_err(central, stencil) <= 1e-3);
  }
}

TEST_CASE("theta round trip and the noise floor") {
  KernelSpec spec;
  spec.temporal = TemporalKernel::Matern32;
  spec.temporal_lengthscale = 0.4;
  spec.temporal_amplitude = 1.7;
  spec.spatial = SpatialKernel::SquaredExponential;
  spec.spatial_lengthscale = 2.0;
  spec.spatial_amplitude = 0.6;
  spec.noise_variance = 0.05;
  ThetaVector theta = ThetaVector::from_spec(spec);
  REQUIRE(theta.names.size() == 5);
  const KernelSpec round = theta.apply_to(spec);
  CHECK(round.temporal_lengthscale == Approx(0.4));
  CHECK(round.spatial_amplitude == Approx(0.6));

  theta.log_value[theta.log_value.size() - 1] = std::log(1e-12);
  CHECK(theta.apply_to(spec).noise_variance == Approx(1e-8));
}

TEST_CASE("fixed parameters stay fixed through a fit") {
  CounterRng rng(89);
  const auto inst = test_helpers::random_instance(rng, false);
  ThetaVector theta = ThetaVector::from_spec(inst.spec);
  theta.fix("noise_variance");
  AdamSettings settings;
  settings.steps = 5;
  const auto res = fit(inst.spec, theta, inst.data,
                       WeightPolicy::adaptive(), ObjectiveKind::Robust,
                       settings);
  CHECK(res.spec.noise_variance == Approx(inst.spec.noise_variance));
}
