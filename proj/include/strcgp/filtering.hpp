#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "strcgp/data.hpp"
#include "strcgp/linalg.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"

namespace strcgp {

/// Gaussian belief over the latent state at one time step.
struct GaussianState {
  Vector mean;
  Matrix cov;
  double time = 0.0;
};

/// One-step-ahead predictive of the observation vector:
/// y_k | y_{1:k-1} ~ N(f_hat, S_hat) with S_hat = H P H^T + sigma^2 I.
struct PredictiveMoments {
  Vector f_hat;
  Matrix s_hat;
};

struct FilterStep {
  GaussianState predicted;
  GaussianState updated;
  PredictiveMoments predictive;  // over all sites, masked or not
  WeightVector weights;          // NaN entries at masked sites
  double log_pred_density = 0.0; // of the observed coordinates; 0 if none
  std::vector<bool> observed;
  double dt = 0.0;               // step from the previous time (0 at k=0)
};

struct FilterTrace {
  std::vector<FilterStep> steps;
  double noise_sd = 0.0;

  Eigen::Index n_steps() const {
    return static_cast<Eigen::Index>(steps.size());
  }
  double total_log_pred_density() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.log_pred_density;
    return s;
  }
  /// Per-step vectors of weights at observed sites (order of site index).
  std::vector<Vector> observed_weights() const {
    std::vector<Vector> out;
    out.reserve(steps.size());
    for (const auto& st : steps) {
      std::vector<double> w;
      for (std::size_t j = 0; j < st.observed.size(); ++j)
        if (st.observed[j]) w.push_back(st.weights.w[static_cast<Eigen::Index>(j)]);
      out.push_back(Eigen::Map<const Vector>(w.data(), w.size()));
    }
    return out;
  }
};

inline GaussianState predict(const GaussianState& state,
                             const Transition& trans) {
  if (trans.transition.cols() != state.mean.size())
    throw InvalidInput("predict: dimension mismatch");
  GaussianState out;
  out.mean = trans.transition * state.mean;
  out.cov = symmetrize(trans.transition * state.cov *
                           trans.transition.transpose() +
                       trans.process_noise);
  out.time = state.time + trans.dt;
  return out;
}

inline PredictiveMoments predictive_moments(const GaussianState& state,
                                            const Matrix& h, double sigma) {
  if (!(sigma > 0.0))
    throw InvalidInput("predictive_moments: sigma must be positive");
  PredictiveMoments out;
  out.f_hat = h * state.mean;
  out.s_hat = symmetrize(h * state.cov * h.transpose());
  out.s_hat.diagonal().array() += sigma * sigma;
  return out;
}

struct UpdateResult {
  GaussianState state;
  double log_pred_density = 0.0;
};

/// Generalised-Bayes measurement update. Written in innovation form: the
/// weights enter as the effective observation noise R = sigma^2 J_w with
/// J_w = diag(sigma^2/2 w^-2), and the innovation is taken against the
/// shifted pseudo-observation f_hat + sigma^2 d/dy log(w^2). With
/// w = sigma/sqrt(2) this is exactly the standard Kalman update. Masked
/// sites are dropped from H, y, and w; a fully masked step leaves the state
/// untouched. Also returns log N(y; f_hat, S_hat) over the observed sites,
/// the ingredient of the predictive-density objectives.
inline UpdateResult update_gb(const GaussianState& state, const Vector& y,
                              const std::vector<bool>& observed,
                              const Matrix& h, double sigma,
                              const WeightVector& weights) {
  const Eigen::Index n_sites = h.rows();
  if (y.size() != n_sites ||
      static_cast<Eigen::Index>(observed.size()) != n_sites ||
      weights.w.size() != n_sites)
    throw InvalidInput("update_gb: dimension mismatch");

  std::vector<int> idx;
  for (int j = 0; j < n_sites; ++j)
    if (observed[j]) idx.push_back(j);
  const auto n_obs = static_cast<Eigen::Index>(idx.size());
  if (n_obs == 0) return {state, 0.0};

  Matrix h_obs(n_obs, h.cols());
  Vector y_obs(n_obs), w_obs(n_obs), dlogw2_obs(n_obs);
  for (Eigen::Index r = 0; r < n_obs; ++r) {
    h_obs.row(r) = h.row(idx[r]);
    y_obs[r] = y[idx[r]];
    w_obs[r] = weights.w[idx[r]];
    dlogw2_obs[r] = weights.dlogw2[idx[r]];
  }
  if (!w_obs.allFinite() || (w_obs.array() <= 0.0).any())
    throw InvalidInput("update_gb: weights must be positive and finite");

  const double sigma2 = sigma * sigma;
  const Vector f_hat = h_obs * state.mean;
  const Matrix cross = state.cov * h_obs.transpose();  // P H^T
  const Matrix s_base = symmetrize(h_obs * cross);     // H P H^T

  // Log predictive density under S_hat = H P H^T + sigma^2 I.
  Matrix s_hat = s_base;
  s_hat.diagonal().array() += sigma2;
  double lpd;
  {
    SpdFactor factor(s_hat);
    const Vector r = y_obs - f_hat;
    lpd = -0.5 * (static_cast<double>(n_obs) * std::log(2.0 * M_PI) +
                  factor.log_det() + r.dot(factor.solve(r)));
  }

  // Effective noise R = sigma^2 J_w = diag(sigma^4/2 w^-2).
  const Vector r_diag =
      0.5 * sigma2 * sigma2 * w_obs.array().square().inverse();
  Matrix s_w = s_base;
  s_w.diagonal() += r_diag;

  Matrix gain;  // K = P H^T (S_w)^-1
  try {
    SpdFactor factor(s_w);
    gain = factor.solve(cross.transpose()).transpose();
  } catch (const SingularMatrix& e) {
    throw SingularInnovation(e.what());
  }

  const Vector pseudo = f_hat + sigma2 * dlogw2_obs;
  UpdateResult out;
  out.state.time = state.time;
  out.state.mean = state.mean + gain * (y_obs - pseudo);
  // Joseph form keeps the covariance symmetric PSD.
  const Matrix i_kh =
      Matrix::Identity(state.cov.rows(), state.cov.cols()) - gain * h_obs;
  out.state.cov = symmetrize(i_kh * state.cov * i_kh.transpose() +
                             gain * r_diag.asDiagonal() * gain.transpose());
  out.log_pred_density = lpd;
  return out;
}

namespace detail {

inline WeightVector evaluate_policy(const WeightPolicy& policy,
                                    const StateSpaceModel& model,
                                    const Vector& y,
                                    const std::vector<bool>& observed,
                                    const PredictiveMoments& moments,
                                    double time) {
  const Eigen::Index n_sites = y.size();
  const double sigma = model.spec.noise_sd();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  WeightVector out;
  out.w = Vector::Constant(n_sites, nan);
  out.dlogw2 = Vector::Constant(n_sites, nan);

  std::vector<int> idx;
  for (int j = 0; j < n_sites; ++j)
    if (observed[j]) idx.push_back(j);
  if (idx.empty()) return out;

  switch (policy.kind) {
    case WeightPolicy::Kind::Constant: {
      const double beta = policy.effective_beta(sigma);
      for (int j : idx) {
        out.w[j] = beta;
        out.dlogw2[j] = 0.0;
      }
      break;
    }
    case WeightPolicy::Kind::FixedImq: {
      const double beta = policy.effective_beta(sigma);
      for (int j : idx) {
        const double gamma = policy.gamma_fn
                                 ? policy.gamma_fn(time, model.grid.row(j))
                                 : policy.gamma_const;
        const WeightValue v = imq_weight(y[j], gamma, policy.c_const, beta,
                                         policy.imq_exponent);
        out.w[j] = v.weight;
        out.dlogw2[j] = v.dlogw2;
      }
      break;
    }
    case WeightPolicy::Kind::AdaptiveImq: {
      const auto n_obs = static_cast<Eigen::Index>(idx.size());
      Vector y_o(n_obs), f_o(n_obs), s_o(n_obs);
      for (Eigen::Index r = 0; r < n_obs; ++r) {
        y_o[r] = y[idx[r]];
        f_o[r] = moments.f_hat[idx[r]];
        s_o[r] = moments.s_hat(idx[r], idx[r]);
      }
      const WeightVector w =
          adaptive_weights(y_o, f_o, s_o, sigma, policy.imq_exponent);
      for (Eigen::Index r = 0; r < n_obs; ++r) {
        out.w[idx[r]] = w.w[r];
        out.dlogw2[idx[r]] = w.dlogw2[r];
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Forward pass. The state at the first timestamp is the stationary prior
/// N(0, Sigma0); each later step chains predict -> predictive moments ->
/// weights -> generalised update. Adaptive weights always read the
/// predictive computed *before* the update.
inline FilterTrace run_filter(const StateSpaceModel& model,
                              TransitionCache& transitions,
                              const Dataset& data,
                              const WeightPolicy& policy) {
  data.validate();
  if (data.n_sites() != model.n_sites)
    throw InvalidInput("run_filter: dataset grid does not match the model");
  const Eigen::Index n_t = data.n_steps();
  const double sigma = model.spec.noise_sd();

  FilterTrace trace;
  trace.noise_sd = sigma;
  trace.steps.reserve(n_t);

  GaussianState state;
  state.mean = Vector::Zero(model.state_dim);
  state.cov = model.initial_cov;
  state.time = data.times[0];

  for (Eigen::Index k = 0; k < n_t; ++k) {
    FilterStep step;
    step.dt = k == 0 ? 0.0 : data.times[k] - data.times[k - 1];
    step.predicted =
        k == 0 ? state : predict(trace.steps[k - 1].updated,
                                 transitions.at(step.dt));
    step.predictive = predictive_moments(step.predicted, model.measurement,
                                         sigma);
    step.observed.resize(data.n_sites());
    for (Eigen::Index j = 0; j < data.n_sites(); ++j)
      step.observed[j] = data.observed(k, j);
    step.weights =
        detail::evaluate_policy(policy, model, data.y.row(k).transpose(),
                                step.observed, step.predictive, data.times[k]);
    UpdateResult upd =
        update_gb(step.predicted, data.y.row(k).transpose(), step.observed,
                  model.measurement, sigma, step.weights);
    step.updated = std::move(upd.state);
    step.log_pred_density = upd.log_pred_density;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

/// Backward Rauch-Tung-Striebel pass over a completed trace. The weights do
/// not reappear here: they already shaped the filtered states.
inline std::vector<GaussianState> run_smoother(const FilterTrace& trace,
                                               TransitionCache& transitions) {
  const Eigen::Index n_t = trace.n_steps();
  if (n_t == 0) throw InvalidInput("run_smoother: empty trace");
  std::vector<GaussianState> smoothed(n_t);
  smoothed[n_t - 1] = trace.steps[n_t - 1].updated;
  for (Eigen::Index k = n_t - 2; k >= 0; --k) {
    const FilterStep& next = trace.steps[k + 1];
    const Matrix& a = transitions.at(next.dt).transition;
    const GaussianState& filt = trace.steps[k].updated;
    // G = P_{k|k} A^T P_{k+1|k}^{-1}
    const Matrix gain =
        psd_solve(next.predicted.cov, a * filt.cov).solution.transpose();
    GaussianState s;
    s.time = filt.time;
    s.mean = filt.mean + gain * (smoothed[k + 1].mean - next.predicted.mean);
    s.cov = symmetrize(filt.cov +
                       gain * (smoothed[k + 1].cov - next.predicted.cov) *
                           gain.transpose());
    smoothed[k] = std::move(s);
  }
  return smoothed;
}

/// Marginal mean and variance of the function values f at every grid node.
struct Marginals {
  Vector times;
  Matrix mean;   // n_t x n_s
  Matrix var;    // n_t x n_s, posterior variance of f (noise-free)
};

inline Marginals f_marginals(const StateSpaceModel& model,
                             const std::vector<GaussianState>& states) {
  const auto n_t = static_cast<Eigen::Index>(states.size());
  Marginals out;
  out.times.resize(n_t);
  out.mean.resize(n_t, model.n_sites);
  out.var.resize(n_t, model.n_sites);
  for (Eigen::Index k = 0; k < n_t; ++k) {
    out.times[k] = states[k].time;
    out.mean.row(k) = (model.measurement * states[k].mean).transpose();
    out.var.row(k) =
        (model.measurement * states[k].cov * model.measurement.transpose())
            .diagonal()
            .transpose();
  }
  return out;
}

/// Marginals of f at every node of a fitted trace, from the smoothed
/// distribution by default. Prediction at unobserved locations or times is
/// the special case of masked entries in the dataset the trace was run on.
inline Marginals predict_at(const StateSpaceModel& model,
                            const FilterTrace& trace,
                            const std::vector<GaussianState>& smoothed,
                            bool use_smoothed = true) {
  if (use_smoothed) return f_marginals(model, smoothed);
  std::vector<GaussianState> filtered;
  filtered.reserve(trace.steps.size());
  for (const auto& s : trace.steps) filtered.push_back(s.updated);
  return f_marginals(model, filtered);
}

/// Pure-prediction forecast beyond the end of a trace. Times must be
/// strictly increasing and later than the last fitted timestamp; backward
/// extrapolation is not supported.
inline Marginals forecast(const StateSpaceModel& model,
                          TransitionCache& transitions,
                          const FilterTrace& trace,
                          const std::vector<double>& times) {
  if (trace.n_steps() == 0) throw InvalidInput("forecast: empty trace");
  GaussianState state = trace.steps.back().updated;
  std::vector<GaussianState> states;
  for (double t : times) {
    if (!(t > state.time))
      throw InvalidInput("forecast: times must increase beyond the fit");
    state = predict(state, transitions.at(t - state.time));
    states.push_back(state);
  }
  return f_marginals(model, states);
}

}  // namespace strcgp
