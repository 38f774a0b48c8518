#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "strcgp/filtering.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"

namespace strcgp {

/// Kernel and noise parameters in log space. ell_t, sigma_kt and sigma^2
/// are always present; the spatial pair joins when the kernel has a spatial
/// component. Entries can be pinned with the fixed mask; sigma^2 is floored
/// at 1e-8 when mapped back so no candidate ever degenerates the likelihood.
struct ThetaVector {
  std::vector<std::string> names;
  Vector log_value;
  std::vector<bool> fixed;

  static constexpr double kSigma2Floor = 1e-8;

  static ThetaVector from_spec(const KernelSpec& spec) {
    spec.validate();
    ThetaVector t;
    t.names = {"temporal_lengthscale", "temporal_amplitude"};
    std::vector<double> v = {std::log(spec.temporal_lengthscale),
                             std::log(spec.temporal_amplitude)};
    if (spec.spatial != SpatialKernel::None) {
      t.names.push_back("spatial_lengthscale");
      t.names.push_back("spatial_amplitude");
      v.push_back(std::log(spec.spatial_lengthscale));
      v.push_back(std::log(spec.spatial_amplitude));
    }
    t.names.push_back("noise_variance");
    v.push_back(std::log(spec.noise_variance));
    t.log_value = Eigen::Map<const Vector>(v.data(), v.size());
    t.fixed.assign(t.names.size(), false);
    return t;
  }

  KernelSpec apply_to(KernelSpec base) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double v = std::exp(log_value[static_cast<Eigen::Index>(i)]);
      if (names[i] == "temporal_lengthscale") base.temporal_lengthscale = v;
      else if (names[i] == "temporal_amplitude") base.temporal_amplitude = v;
      else if (names[i] == "spatial_lengthscale") base.spatial_lengthscale = v;
      else if (names[i] == "spatial_amplitude") base.spatial_amplitude = v;
      else if (names[i] == "noise_variance")
        base.noise_variance = std::max(v, kSigma2Floor);
    }
    return base;
  }

  void fix(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) fixed[i] = true;
  }

  /// Free coordinates, in order.
  Vector active() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (!fixed[i]) v.push_back(log_value[static_cast<Eigen::Index>(i)]);
    return Eigen::Map<const Vector>(v.data(), v.size());
  }

  void set_active(const Vector& x) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (!fixed[i]) log_value[static_cast<Eigen::Index>(i)] = x[at++];
  }
};

/// One evaluation of a hyperparameter objective.
struct ObjectiveReport {
  double value = 0.0;
  Vector step_log_densities;
  Vector step_summary_weights;  // empty for the unweighted objective
};

/// Negative sum of one-step-ahead log predictive densities,
/// phi = -sum_k log N(y_k; f_hat_k, S_hat_k), evaluated by a filter pass.
inline ObjectiveReport phi(const KernelSpec& spec, const Dataset& data,
                           const WeightPolicy& policy) {
  const StateSpaceModel model = assemble_model(spec, data.grid);
  TransitionCache cache(model);
  const FilterTrace trace = run_filter(model, cache, data, policy);
  ObjectiveReport rep;
  rep.step_log_densities.resize(trace.n_steps());
  for (Eigen::Index k = 0; k < trace.n_steps(); ++k)
    rep.step_log_densities[k] = trace.steps[k].log_pred_density;
  rep.value = -rep.step_log_densities.sum();
  return rep;
}

/// Weighted variant: each step's log predictive density is scaled by a
/// summary of that step's weights, so steps the filter already distrusts
/// barely move the objective. Requires the adaptive policy (the weights are
/// recomputed inside the filter at every candidate theta).
///
/// The summaries entering the objective must be scale-free in the weight
/// cap beta = sigma/sqrt(2): beta depends on the candidate theta, and a raw
/// beta-scaled summary would let the optimiser shrink the whole objective
/// towards zero by collapsing sigma instead of explaining the data. The
/// spatio-temporal summaries are already normalised to sum to one, so only
/// the single-site case needs the division by beta; a clean perfectly
/// predicted dataset then reproduces the unweighted objective exactly.
inline ObjectiveReport phi_gb(const KernelSpec& spec, const Dataset& data,
                              const WeightPolicy& policy,
                              SummaryMode mode = SummaryMode::Quantile,
                              double delta = 0.05) {
  if (policy.kind != WeightPolicy::Kind::AdaptiveImq)
    throw InvalidInput("phi_gb: requires the adaptive weight policy");
  const StateSpaceModel model = assemble_model(spec, data.grid);
  TransitionCache cache(model);
  const FilterTrace trace = run_filter(model, cache, data, policy);
  ObjectiveReport rep;
  rep.step_log_densities.resize(trace.n_steps());
  for (Eigen::Index k = 0; k < trace.n_steps(); ++k)
    rep.step_log_densities[k] = trace.steps[k].log_pred_density;
  rep.step_summary_weights = summary_weights(
      trace.observed_weights(), data.n_sites() > 1, mode, delta);
  if (data.n_sites() == 1)
    rep.step_summary_weights /= policy.effective_beta(spec.noise_sd());
  rep.value =
      -(rep.step_summary_weights.array() * rep.step_log_densities.array())
           .sum();
  return rep;
}

struct AdamSettings {
  double learning_rate = 0.3;
  int steps = 70;
  double fd_step = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamResult {
  Vector x_best;
  double f_best = 0.0;
  std::vector<double> trace;       // objective value per iteration
  std::vector<double> best_trace;  // best-so-far per iteration
  int evaluations = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Adam with central finite-difference gradients. A non-finite objective
/// value rejects the step and halves the difference step once; a second
/// occurrence aborts and returns the best point seen. Deterministic given
/// (objective, start, settings). The optional hook runs at the start of
/// every iteration with the current iterate, so stateful objectives (e.g.
/// iteratively reweighted ones) can refresh themselves.
inline AdamResult adam_minimize(
    const std::function<double(const Vector&)>& f, Vector x0,
    const AdamSettings& settings,
    const std::function<void(const Vector&)>& on_iteration = {}) {
  AdamResult res;
  int evals = 0;
  const auto eval = [&](const Vector& x) {
    ++evals;
    return f(x);
  };

  double fx = eval(x0);
  if (!std::isfinite(fx))
    throw InvalidStart("adam_minimize: objective not finite at start");
  res.x_best = x0;
  res.f_best = fx;

  const Eigen::Index dim = x0.size();
  Vector x = x0;
  Vector m = Vector::Zero(dim), v = Vector::Zero(dim);
  double fd = settings.fd_step;
  bool halved = false;

  for (int it = 1; it <= settings.steps && dim > 0; ++it) {
    if (on_iteration) {
      // Refresh the stateful objective, then rescore both the iterate and
      // the incumbent best so comparisons stay internally consistent.
      on_iteration(x);
      fx = eval(x);
      res.f_best = eval(res.x_best);
      if (std::isfinite(fx) && fx < res.f_best) {
        res.f_best = fx;
        res.x_best = x;
      }
    }
    Vector grad(dim);
    bool grad_ok = true;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double h = fd * std::max(1.0, std::abs(x[i]));
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fp = eval(xp), fm = eval(xm);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        grad_ok = false;
        break;
      }
      grad[i] = (fp - fm) / (2.0 * h);
    }

    bool step_ok = false;
    if (grad_ok) {
      m = settings.beta1 * m + (1.0 - settings.beta1) * grad;
      v = settings.beta2 * v.array().matrix() +
          (1.0 - settings.beta2) * grad.array().square().matrix();
      const double bc1 = 1.0 - std::pow(settings.beta1, it);
      const double bc2 = 1.0 - std::pow(settings.beta2, it);
      Vector candidate = x;
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        candidate[i] -=
            settings.learning_rate * m_hat /
            (std::sqrt(v_hat) + settings.epsilon);
      }
      const double f_cand = eval(candidate);
      if (std::isfinite(f_cand)) {
        x = candidate;
        fx = f_cand;
        step_ok = true;
        if (fx < res.f_best) {
          res.f_best = fx;
          res.x_best = x;
        }
      }
    }

    if (!step_ok) {
      if (halved) {
        res.aborted = true;
        res.abort_reason =
            "non-finite objective at iteration " + std::to_string(it) +
            " after halving the finite-difference step";
        break;
      }
      halved = true;
      fd *= 0.5;
      x = res.x_best;
      fx = res.f_best;
    }
    res.trace.push_back(fx);
    res.best_trace.push_back(res.f_best);
  }
  res.evaluations = evals;
  return res;
}

enum class ObjectiveKind { Standard, Robust };

/// Everything a completed optimisation produces: the fitted spec, the
/// objective history, and the filter/smoother state at the optimum.
struct FitResult {
  KernelSpec spec;
  ThetaVector theta;
  std::vector<double> objective_trace;
  std::vector<double> best_trace;
  double objective_value = 0.0;
  int evaluations = 0;
  bool aborted = false;
  std::string abort_reason;
  FilterTrace trace;
  std::vector<GaussianState> smoothed;
};

/// Runs Adam over the free log-parameters of `theta0`, then refits the
/// filter and smoother at the best theta.
///
/// The robust objective is optimised as an iteratively reweighted scheme:
/// the per-step summary weights are refreshed from the filter at the
/// current iterate and held fixed while the surrounding gradient stencil
/// and step are evaluated, exactly as weighted-likelihood estimators are
/// classically computed. Letting the weights vary inside the stencil adds
/// a spurious force that rewards shrinking the noise (smaller sigma narrows
/// every weight and discounts whichever residuals are inconvenient), which
/// measurably biases sigma^2 down and miscalibrates the posterior. The
/// filter run at each candidate still adapts its weights as always; only
/// the objective's summary coefficients are frozen per iteration.
inline FitResult fit(const KernelSpec& base, ThetaVector theta0,
                     const Dataset& data, const WeightPolicy& policy,
                     ObjectiveKind objective,
                     const AdamSettings& settings = {},
                     SummaryMode mode = SummaryMode::Quantile,
                     double delta = 0.05) {
  const bool robust = objective == ObjectiveKind::Robust;
  if (robust && policy.kind != WeightPolicy::Kind::AdaptiveImq)
    throw InvalidInput("fit: the robust objective requires adaptive weights");

  // One filter pass at a candidate theta: per-step log predictive
  // densities and, when asked, the normalised summary weights.
  const auto evaluate_trace = [&](const Vector& active, Vector* lpds,
                                  Vector* summaries) {
    ThetaVector t = theta0;
    t.set_active(active);
    const KernelSpec spec = t.apply_to(base);
    try {
      const StateSpaceModel model = assemble_model(spec, data.grid);
      TransitionCache cache(model);
      const FilterTrace trace = run_filter(model, cache, data, policy);
      lpds->resize(trace.n_steps());
      for (Eigen::Index k = 0; k < trace.n_steps(); ++k)
        (*lpds)[k] = trace.steps[k].log_pred_density;
      if (summaries) {
        *summaries = summary_weights(trace.observed_weights(),
                                     data.n_sites() > 1, mode, delta);
        if (data.n_sites() == 1)
          *summaries /= policy.effective_beta(spec.noise_sd());
      }
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  Vector frozen;
  std::function<double(const Vector&)> objective_fn;
  std::function<void(const Vector&)> refresh;
  if (robust) {
    Vector lpds;
    if (!evaluate_trace(theta0.active(), &lpds, &frozen))
      throw InvalidStart("fit: filter failed at the starting point");
    objective_fn = [&, evaluate_trace](const Vector& x) {
      Vector inner;
      if (!evaluate_trace(x, &inner, nullptr))
        return std::numeric_limits<double>::quiet_NaN();
      return -(frozen.array() * inner.array()).sum();
    };
    refresh = [&, evaluate_trace](const Vector& x) {
      Vector inner, summaries;
      if (evaluate_trace(x, &inner, &summaries)) frozen = summaries;
    };
  } else {
    objective_fn = [&, evaluate_trace](const Vector& x) {
      Vector inner;
      if (!evaluate_trace(x, &inner, nullptr))
        return std::numeric_limits<double>::quiet_NaN();
      return -inner.sum();
    };
  }

  const AdamResult opt =
      adam_minimize(objective_fn, theta0.active(), settings, refresh);

  FitResult out;
  theta0.set_active(opt.x_best);
  out.theta = theta0;
  out.spec = theta0.apply_to(base);
  out.objective_trace = opt.trace;
  out.best_trace = opt.best_trace;
  out.evaluations = opt.evaluations;
  out.aborted = opt.aborted;
  out.abort_reason = opt.abort_reason;
  out.objective_value =
      robust ? phi_gb(out.spec, data, policy, mode, delta).value
             : phi(out.spec, data, policy).value;

  const StateSpaceModel model = assemble_model(out.spec, data.grid);
  TransitionCache cache(model);
  out.trace = run_filter(model, cache, data, policy);
  out.smoothed = run_smoother(out.trace, cache);
  return out;
}

}  // namespace strcgp
