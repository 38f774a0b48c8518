// Command-line front end: synthetic data generation, fitting, prediction,
// diagnostics, and runtime benchmarks for state-space robust GP regression.
//
// Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "strcgp/bench.hpp"
#include "strcgp/strcgp.hpp"

using nlohmann::json;
using namespace strcgp;

namespace {

constexpr const char* kResultSchema = "strcgp-result-v1";
constexpr const char* kMetricsSchema = "strcgp-metrics-v1";

std::uint64_t default_seed() {
  if (const char* env = std::getenv("STRCGP_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

TemporalKernel parse_temporal(const std::string& name) {
  if (name == "wiener") return TemporalKernel::Wiener;
  if (name == "exponential" || name == "matern12")
    return TemporalKernel::Exponential;
  if (name == "matern32") return TemporalKernel::Matern32;
  if (name == "matern52") return TemporalKernel::Matern52;
  if (name == "periodic")
    throw CLI::ValidationError(
        "--temporal-kernel",
        "the periodic kernel has no supported state-space form");
  throw CLI::ValidationError("--temporal-kernel",
                             "unknown temporal kernel '" + name + "'");
}

SpatialKernel parse_spatial(const std::string& name) {
  if (name == "none") return SpatialKernel::None;
  if (name == "se" || name == "squared-exponential")
    return SpatialKernel::SquaredExponential;
  if (name == "matern32") return SpatialKernel::Matern32;
  throw CLI::ValidationError("--spatial-kernel",
                             "unknown spatial kernel '" + name + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

// Shared kernel/method flags. Numeric values left at NaN fall back to
// data-driven defaults once the dataset is known.
struct ModelFlags {
  std::string method = "st-rcgp";
  std::string temporal_kernel = "matern32";
  std::string spatial_kernel = "auto";
  double temporal_lengthscale = std::numeric_limits<double>::quiet_NaN();
  double temporal_amplitude = std::numeric_limits<double>::quiet_NaN();
  double spatial_lengthscale = std::numeric_limits<double>::quiet_NaN();
  double spatial_amplitude = std::numeric_limits<double>::quiet_NaN();
  double noise_variance = std::numeric_limits<double>::quiet_NaN();
  double fixed_gamma = std::numeric_limits<double>::quiet_NaN();
  double fixed_c = std::numeric_limits<double>::quiet_NaN();
  double imq_exponent = -0.5;
  std::string params_path;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--method", method,
                    "Inference method: stgp, st-rcgp, rcgp-fixed")
        ->check(CLI::IsMember({"stgp", "st-rcgp", "rcgp-fixed"}));
    cmd->add_option("--temporal-kernel", temporal_kernel,
                    "wiener, exponential, matern32, matern52");
    cmd->add_option("--spatial-kernel", spatial_kernel,
                    "none, se, matern32 (default: by data layout)");
    cmd->add_option("--temporal-lengthscale", temporal_lengthscale);
    cmd->add_option("--temporal-amplitude", temporal_amplitude);
    cmd->add_option("--spatial-lengthscale", spatial_lengthscale);
    cmd->add_option("--spatial-amplitude", spatial_amplitude);
    cmd->add_option("--noise-variance", noise_variance);
    cmd->add_option("--fixed-gamma", fixed_gamma,
                    "rcgp-fixed centring (default: mean of the data)");
    cmd->add_option("--fixed-c", fixed_c,
                    "rcgp-fixed shrinkage (default: 0.95 quantile of "
                    "|y - gamma|)");
    cmd->add_option("--imq-exponent", imq_exponent,
                    "IMQ exponent alpha < 0 (default -0.5)");
    cmd->add_option("--params", params_path,
                    "JSON result file supplying the kernel parameters");
  }
};

KernelSpec spec_from_json(const json& j) {
  KernelSpec spec;
  spec.temporal = parse_temporal(j.at("kernel").at("temporal"));
  spec.spatial = parse_spatial(j.at("kernel").at("spatial"));
  const auto& theta = j.at("theta");
  spec.temporal_lengthscale = theta.at("temporal_lengthscale");
  spec.temporal_amplitude = theta.at("temporal_amplitude");
  if (spec.spatial != SpatialKernel::None) {
    spec.spatial_lengthscale = theta.at("spatial_lengthscale");
    spec.spatial_amplitude = theta.at("spatial_amplitude");
  }
  spec.noise_variance = theta.at("noise_variance");
  return spec;
}

json spec_to_json(const KernelSpec& spec) {
  json theta = {{"temporal_lengthscale", spec.temporal_lengthscale},
                {"temporal_amplitude", spec.temporal_amplitude},
                {"noise_variance", spec.noise_variance}};
  if (spec.spatial != SpatialKernel::None) {
    theta["spatial_lengthscale"] = spec.spatial_lengthscale;
    theta["spatial_amplitude"] = spec.spatial_amplitude;
  }
  return {{"kernel",
           {{"temporal", to_string(spec.temporal)},
            {"spatial", to_string(spec.spatial)}}},
          {"theta", theta}};
}

// Fill unset parameters with scale estimates read off the data.
KernelSpec resolve_spec(const ModelFlags& flags, const Dataset& data) {
  if (!flags.params_path.empty()) {
    std::ifstream in(flags.params_path);
    if (!in) throw IoError("cannot open " + flags.params_path);
    json j;
    in >> j;
    return spec_from_json(j);
  }

  KernelSpec spec;
  spec.temporal = parse_temporal(flags.temporal_kernel);
  spec.spatial = flags.spatial_kernel == "auto"
                     ? (data.n_sites() > 1 ? SpatialKernel::Matern32
                                           : SpatialKernel::None)
                     : parse_spatial(flags.spatial_kernel);
  if (spec.spatial == SpatialKernel::None && data.n_sites() > 1)
    throw CLI::ValidationError(
        "--spatial-kernel", "spatio-temporal data needs a spatial kernel");

  std::vector<double> observed;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j)
      if (data.observed(k, j)) observed.push_back(data.y(k, j));
  double mean = 0.0, var = 1.0;
  if (!observed.empty()) {
    for (double v : observed) mean += v;
    mean /= static_cast<double>(observed.size());
    var = 0.0;
    for (double v : observed) var += (v - mean) * (v - mean);
    var /= static_cast<double>(std::max<std::size_t>(observed.size() - 1, 1));
    var = std::max(var, 1e-6);
  }
  const double span = data.times[data.n_steps() - 1] - data.times[0];

  spec.temporal_lengthscale = std::isnan(flags.temporal_lengthscale)
                                  ? std::max(span / 4.0, 1e-3)
                                  : flags.temporal_lengthscale;
  spec.temporal_amplitude = std::isnan(flags.temporal_amplitude)
                                ? std::sqrt(var)
                                : flags.temporal_amplitude;
  spec.noise_variance = std::isnan(flags.noise_variance)
                            ? std::max(0.1 * var, 1e-4)
                            : flags.noise_variance;
  if (spec.spatial != SpatialKernel::None) {
    double extent = 0.0;
    for (Eigen::Index a = 0; a < data.n_sites(); ++a)
      for (Eigen::Index b = a + 1; b < data.n_sites(); ++b)
        extent = std::max(extent,
                          (data.grid.row(a) - data.grid.row(b)).norm());
    spec.spatial_lengthscale = std::isnan(flags.spatial_lengthscale)
                                   ? std::max(extent / 4.0, 1e-3)
                                   : flags.spatial_lengthscale;
    spec.spatial_amplitude =
        std::isnan(flags.spatial_amplitude) ? 1.0 : flags.spatial_amplitude;
  }
  spec.validate();
  return spec;
}

WeightPolicy resolve_policy(const ModelFlags& flags, const Dataset& data) {
  if (flags.method == "stgp") return WeightPolicy::constant();
  if (flags.method == "st-rcgp")
    return WeightPolicy::adaptive(flags.imq_exponent);

  // rcgp-fixed: constant centring (data mean unless given) plus the
  // classical quantile heuristic for the shrinkage.
  std::vector<double> observed;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j)
      if (data.observed(k, j)) observed.push_back(data.y(k, j));
  if (observed.empty()) throw InvalidInput("rcgp-fixed: no observed data");
  double gamma = flags.fixed_gamma;
  if (std::isnan(gamma)) {
    gamma = 0.0;
    for (double v : observed) gamma += v;
    gamma /= static_cast<double>(observed.size());
  }
  double c = flags.fixed_c;
  if (std::isnan(c)) {
    Vector dev(static_cast<Eigen::Index>(observed.size()));
    for (std::size_t i = 0; i < observed.size(); ++i)
      dev[static_cast<Eigen::Index>(i)] = std::abs(observed[i] - gamma);
    c = std::max(quantile(dev, 0.95), 1e-8);
  }
  return WeightPolicy::fixed_imq(gamma, c, flags.imq_exponent);
}

// Locates a grid row by its printed coordinates; exact match is safe
// because the values round-trip through 17 significant digits.
Eigen::Index find_site(const Dataset& data,
                       const std::vector<std::string>& fields,
                       Eigen::Index offset) {
  const Eigen::Index d = data.grid.cols();
  for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
    bool match = true;
    for (Eigen::Index c = 0; c < d; ++c)
      if (std::stod(fields[offset + c]) != data.grid(j, c)) {
        match = false;
        break;
      }
    if (match) return j;
  }
  return -1;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string preset = "temporal-matern";
  std::uint64_t seed = default_seed();
  int grid = 25;
  int n_steps = -1;
  double outlier_rate = std::numeric_limits<double>::quiet_NaN();
  double noise_sd = std::numeric_limits<double>::quiet_NaN();
  std::string output;
  std::string truth;
};

int cmd_simulate(const SimulateArgs& args) {
  GeneratorConfig config = args.preset == "temporal-matern"
                               ? GeneratorConfig::temporal_matern(args.seed)
                               : GeneratorConfig::st_quadratic(args.seed);
  if (args.n_steps > 0) config.n_steps = args.n_steps;
  if (!std::isnan(args.outlier_rate)) config.outlier_rate = args.outlier_rate;
  if (!std::isnan(args.noise_sd)) config.noise_sd = args.noise_sd;
  config.grid_per_axis = args.grid;

  const Dataset data = args.preset == "temporal-matern"
                           ? gen_temporal(config)
                           : gen_spatiotemporal(config);
  write_csv(data, args.output);
  const std::string truth_path =
      args.truth.empty() ? args.output + ".truth.csv" : args.truth;
  write_truth_csv(data, truth_path);
  std::cout << "wrote " << data.n_steps() << " steps x " << data.n_sites()
            << " sites to " << args.output << " (truth: " << truth_path
            << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  ModelFlags model;
  std::string objective = "robust";
  std::string summary_mode = "quantile";
  double delta = 0.05;
  double learning_rate = 0.3;
  int steps = 70;
  double fd_step = 1e-4;
  std::vector<std::string> fixed;
  std::string input;
  std::string output;
};

SummaryMode parse_summary_mode(const std::string& name) {
  if (name == "quantile") return SummaryMode::Quantile;
  if (name == "mean") return SummaryMode::Mean;
  if (name == "min") return SummaryMode::Min;
  throw CLI::ValidationError("--summary-mode", "unknown mode '" + name + "'");
}

// Metrics of a fitted model on its own data: errors against the observed
// responses, predictive variance includes the noise.
json fit_metrics(const Dataset& data, const KernelSpec& spec,
                 const FilterTrace& trace, const Marginals& marginals) {
  std::vector<double> y, mu, var;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
      if (!data.observed(k, j)) continue;
      y.push_back(data.y(k, j));
      mu.push_back(marginals.mean(k, j));
      var.push_back(marginals.var(k, j) + spec.noise_variance);
    }
  const auto n = static_cast<Eigen::Index>(y.size());
  const Eigen::Map<const Vector> yv(y.data(), n), mv(mu.data(), n),
      vv(var.data(), n);
  return {{"rmse", rmse(yv, mv)},
          {"nlpd", nlpd(yv, mv, vv)},
          {"ewr", ewr(trace, spec.noise_sd())}};
}

int cmd_fit(const FitArgs& args) {
  const Dataset data = read_csv(args.input);
  const KernelSpec spec0 = resolve_spec(args.model, data);
  const WeightPolicy policy = resolve_policy(args.model, data);
  const ObjectiveKind objective = args.objective == "standard"
                                      ? ObjectiveKind::Standard
                                      : ObjectiveKind::Robust;
  if (objective == ObjectiveKind::Robust &&
      policy.kind != WeightPolicy::Kind::AdaptiveImq)
    throw CLI::ValidationError(
        "--objective", "the robust objective requires --method st-rcgp");

  ThetaVector theta = ThetaVector::from_spec(spec0);
  for (const auto& name : args.fixed) theta.fix(name);

  AdamSettings settings;
  settings.learning_rate = args.learning_rate;
  settings.steps = args.steps;
  settings.fd_step = args.fd_step;

  const FitResult result =
      fit(spec0, theta, data, policy, objective, settings,
          parse_summary_mode(args.summary_mode), args.delta);

  const StateSpaceModel model = assemble_model(result.spec, data.grid);
  const Marginals marginals = f_marginals(model, result.smoothed);

  json out = spec_to_json(result.spec);
  out["schema"] = kResultSchema;
  out["command"] = "fit";
  out["method"] = args.model.method;
  out["objective"] = args.objective;
  out["objective_value"] = result.objective_value;
  out["objective_trace"] = result.objective_trace;
  out["best_trace"] = result.best_trace;
  out["evaluations"] = result.evaluations;
  out["aborted"] = result.aborted;
  if (result.aborted) out["abort_reason"] = result.abort_reason;
  out["metrics"] = fit_metrics(data, result.spec, result.trace, marginals);

  json weights = json::array();
  for (const auto& step : result.trace.steps) {
    json row = json::array();
    for (Eigen::Index j = 0; j < step.weights.w.size(); ++j)
      row.push_back(std::isnan(step.weights.w[j])
                        ? json(nullptr)
                        : json(step.weights.w[j]));
    weights.push_back(std::move(row));
  }
  out["weights"] = weights;
  const Vector summary = summary_weights(
      result.trace.observed_weights(), data.n_sites() > 1,
      parse_summary_mode(args.summary_mode), args.delta);
  out["summary_weights"] =
      std::vector<double>(summary.data(), summary.data() + summary.size());

  std::ofstream os(args.output);
  if (!os) throw IoError("cannot open " + args.output);
  os << out.dump(2) << "\n";
  if (result.aborted) {
    std::cerr << "optimisation aborted: " << result.abort_reason
              << " (partial result written)\n";
    return 3;
  }
  std::cout << "fit written to " << args.output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  ModelFlags model;
  std::string input;
  std::string output;
  bool filtered = false;
  int forecast_steps = 0;
  double forecast_dt = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> at_times;
};

int cmd_predict(const PredictArgs& args) {
  Dataset data = read_csv(args.input);
  if (!args.at_times.empty()) data = with_masked_times(data, args.at_times);
  const KernelSpec spec = resolve_spec(args.model, data);
  const WeightPolicy policy = resolve_policy(args.model, data);

  const StateSpaceModel model = assemble_model(spec, data.grid);
  TransitionCache cache(model);
  const FilterTrace trace = run_filter(model, cache, data, policy);
  const auto smoothed = run_smoother(trace, cache);
  const Marginals marginals =
      predict_at(model, trace, smoothed, !args.filtered);

  std::ofstream out(args.output);
  if (!out) throw IoError("cannot open " + args.output);
  const Eigen::Index d = data.grid.cols();
  out << "t";
  for (Eigen::Index c = 0; c < d; ++c) out << ",s" << (c + 1);
  out << ",mean,sd,weight\n";
  const auto emit = [&](double t, Eigen::Index j, double mean, double var,
                        double weight) {
    out << fmt(t);
    for (Eigen::Index c = 0; c < d; ++c) out << "," << fmt(data.grid(j, c));
    out << "," << fmt(mean) << ","
        << fmt(std::sqrt(var + spec.noise_variance)) << ",";
    if (!std::isnan(weight)) out << fmt(weight);
    out << "\n";
  };
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j)
      emit(data.times[k], j, marginals.mean(k, j), marginals.var(k, j),
           trace.steps[k].weights.w[j]);

  if (args.forecast_steps > 0) {
    const double dt =
        std::isnan(args.forecast_dt)
            ? (data.times[data.n_steps() - 1] - data.times[0]) /
                  std::max<double>(static_cast<double>(data.n_steps() - 1), 1.0)
            : args.forecast_dt;
    std::vector<double> times;
    double t = data.times[data.n_steps() - 1];
    for (int i = 0; i < args.forecast_steps; ++i) times.push_back(t += dt);
    const Marginals fc = forecast(model, cache, trace, times);
    for (Eigen::Index k = 0; k < fc.times.size(); ++k)
      for (Eigen::Index j = 0; j < data.n_sites(); ++j)
        emit(fc.times[k], j, fc.mean(k, j), fc.var(k, j),
             std::numeric_limits<double>::quiet_NaN());
  }
  std::cout << "predictions written to " << args.output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  ModelFlags model;
  std::string input;
  std::string truth;
  std::string predictions;
  std::string output;
  std::string pif_out;
  bool pif = false;
  int pif_step = -1;
  int pif_site = 0;
  std::vector<double> pif_magnitudes;  // in sigma units
  std::vector<double> quantiles = {0.5, 0.9};
};

struct TruthTable {
  Matrix latent;
  BoolArray outlier;
};

// Reads the sidecar written by `simulate` back into step-by-site tables.
TruthTable read_truth(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty truth file " + path);
  const Eigen::Index d = data.grid.cols();
  TruthTable table;
  table.latent = Matrix::Zero(data.n_steps(), data.n_sites());
  table.outlier = BoolArray::Constant(data.n_steps(), data.n_sites(), false);
  std::map<double, Eigen::Index> time_of;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    time_of[data.times[k]] = k;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<Eigen::Index>(fields.size()) != d + 3)
      throw ParseError("truth line " + std::to_string(line_no) +
                       ": wrong field count");
    const auto it = time_of.find(std::stod(fields[0]));
    if (it == time_of.end())
      throw GridMismatch("truth file timestamp not present in the data");
    const Eigen::Index site = find_site(data, fields, 1);
    if (site < 0) throw GridMismatch("truth file location not in the grid");
    table.latent(it->second, site) = std::stod(fields[d + 1]);
    table.outlier(it->second, site) = fields[d + 2] == "1";
  }
  return table;
}

// Reads a predictions CSV back into mean/variance tables aligned with the
// dataset (forecast rows beyond the data are skipped).
void read_predictions(const std::string& path, const Dataset& data,
                      Matrix& mean, Matrix& var) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty predictions file " + path);
  const Eigen::Index d = data.grid.cols();
  mean = Matrix::Zero(data.n_steps(), data.n_sites());
  var = Matrix::Zero(data.n_steps(), data.n_sites());
  std::map<double, Eigen::Index> time_of;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    time_of[data.times[k]] = k;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<Eigen::Index>(fields.size()) != d + 4)
      throw ParseError("predictions line " + std::to_string(line_no) +
                       ": wrong field count");
    const auto it = time_of.find(std::stod(fields[0]));
    if (it == time_of.end()) continue;
    const Eigen::Index site = find_site(data, fields, 1);
    if (site < 0) throw GridMismatch("prediction location not in the grid");
    mean(it->second, site) = std::stod(fields[d + 1]);
    const double sd = std::stod(fields[d + 2]);
    var(it->second, site) = sd * sd;  // predictive variance, noise included
  }
}

int cmd_diagnose(const DiagnoseArgs& args) {
  const Dataset data = read_csv(args.input);
  json out;
  out["schema"] = kMetricsSchema;
  out["command"] = "diagnose";
  out["method"] = args.model.method;

  std::optional<TruthTable> truth;
  if (!args.truth.empty()) truth = read_truth(args.truth, data);

  Matrix mean, var;
  std::optional<double> ewr_value;
  std::optional<KernelSpec> spec;
  if (!args.predictions.empty()) {
    read_predictions(args.predictions, data, mean, var);
    out["source"] = "predictions";
  } else {
    spec = resolve_spec(args.model, data);
    const WeightPolicy policy = resolve_policy(args.model, data);
    const StateSpaceModel model = assemble_model(*spec, data.grid);
    TransitionCache cache(model);
    const FilterTrace trace = run_filter(model, cache, data, policy);
    const auto smoothed = run_smoother(trace, cache);
    const Marginals marg = f_marginals(model, smoothed);
    mean = marg.mean;
    var = marg.var;
    var.array() += spec->noise_variance;
    ewr_value = ewr(trace, spec->noise_sd());
    out["source"] = "model";
    out.update(spec_to_json(*spec));
  }

  // Metric targets: observed nodes; with a truth table, errors are taken
  // against the latent surface and contaminated nodes are excluded.
  std::vector<double> yv, mv, vv;
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
      if (!data.observed(k, j)) continue;
      if (truth && truth->outlier(k, j)) continue;
      yv.push_back(truth ? truth->latent(k, j) : data.y(k, j));
      mv.push_back(mean(k, j));
      vv.push_back(var(k, j));
    }
  const auto n = static_cast<Eigen::Index>(yv.size());
  const Eigen::Map<const Vector> y(yv.data(), n), m(mv.data(), n),
      v(vv.data(), n);
  json metrics = {{"rmse", rmse(y, m)}, {"nlpd", nlpd(y, m, v)}};
  if (ewr_value) metrics["ewr"] = *ewr_value;
  json cov = json::array();
  for (const auto& c : coverage(y, m, v.cwiseSqrt(), args.quantiles))
    cov.push_back({{"nominal", c.nominal}, {"empirical", c.empirical}});
  metrics["coverage"] = cov;
  out["metrics"] = metrics;

  if (args.pif) {
    if (!args.predictions.empty())
      throw CLI::ValidationError("--pif",
                                 "PIF needs a model run, not --predictions");
    const WeightPolicy policy = resolve_policy(args.model, data);
    const double sigma = spec->noise_sd();
    std::vector<double> mags = args.pif_magnitudes;
    if (mags.empty()) mags = {0, 1, 10, 1e2, 1e3, 1e4, 1e5, 1e6};
    std::vector<double> scaled;
    scaled.reserve(mags.size());
    for (double mag : mags) scaled.push_back(mag * sigma);
    const Eigen::Index step =
        args.pif_step < 0 ? data.n_steps() / 2 : args.pif_step;
    const auto curve =
        pif_curve(*spec, data, policy, step, args.pif_site, scaled);
    json pif = {{"step", step},
                {"site", args.pif_site},
                {"magnitudes_sigma", mags},
                {"values", curve.values}};
    // Plateau flag: the final magnitude adds no more than 5% over the
    // 100-sigma value.
    const auto at = std::find(mags.begin(), mags.end(), 1e2);
    if (at != mags.end() && mags.back() > 1e2) {
      const double ref =
          curve.values[static_cast<std::size_t>(at - mags.begin())];
      pif["plateau"] = curve.values.back() <= 1.05 * ref;
    }
    out["pif"] = pif;
    if (!args.pif_out.empty()) {
      std::ofstream pf(args.pif_out);
      if (!pf) throw IoError("cannot open " + args.pif_out);
      pf << "magnitude,pif\n";
      for (std::size_t i = 0; i < curve.values.size(); ++i)
        pf << fmt(curve.magnitudes[i]) << "," << fmt(curve.values[i]) << "\n";
    }
  }

  if (args.output.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream os(args.output);
    if (!os) throw IoError("cannot open " + args.output);
    os << out.dump(2) << "\n";
    std::cout << "metrics written to " << args.output << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::vector<Eigen::Index> sizes = {500, 1000, 2000, 4000, 8000, 16000};
  int reps = 5;
  std::string output;
};

int cmd_bench(const BenchArgs& args) {
  const auto stgp =
      run_scaling_bench(args.sizes, args.reps, WeightPolicy::constant());
  const auto robust =
      run_scaling_bench(args.sizes, args.reps, WeightPolicy::adaptive());

  if (!args.output.empty()) {
    std::ofstream out(args.output);
    if (!out) throw IoError("cannot open " + args.output);
    out << "method,n_t,rep,seconds\n";
    const auto dump = [&](const char* name, const BenchResult& r) {
      for (std::size_t i = 0; i < r.sizes.size(); ++i)
        for (std::size_t rep = 0; rep < r.seconds[i].size(); ++rep)
          out << name << "," << r.sizes[i] << "," << rep << ","
              << fmt(r.seconds[i][rep]) << "\n";
    };
    dump("stgp", stgp);
    dump("st-rcgp", robust);
  }

  const auto spread = [](const BenchResult& r) {
    json arr = json::array();
    for (std::size_t i = 0; i < r.sizes.size(); ++i) {
      const auto& reps = r.seconds[i];
      arr.push_back(
          {{"n_t", r.sizes[i]},
           {"median", r.median_seconds(i)},
           {"min", *std::min_element(reps.begin(), reps.end())},
           {"max", *std::max_element(reps.begin(), reps.end())}});
    }
    return arr;
  };
  json summary = {
      {"schema", kMetricsSchema},
      {"command", "bench"},
      {"stgp", {{"slope", stgp.slope}, {"timings", spread(stgp)}}},
      {"st-rcgp", {{"slope", robust.slope}, {"timings", spread(robust)}}},
      {"time_ratio",
       robust.total_min_seconds() / stgp.total_min_seconds()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust spatio-temporal GP regression in state-space form"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd =
      app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--preset", sim.preset,
                      "temporal-matern or st-quadratic")
      ->check(CLI::IsMember({"temporal-matern", "st-quadratic"}));
  sim_cmd->add_option("--seed", sim.seed, "Generator seed (env STRCGP_SEED)");
  sim_cmd->add_option("--grid", sim.grid, "Grid points per axis (st preset)");
  sim_cmd->add_option("--n-steps", sim.n_steps, "Number of time steps");
  sim_cmd->add_option("--outlier-rate", sim.outlier_rate);
  sim_cmd->add_option("--noise-sd", sim.noise_sd);
  sim_cmd->add_option("-o,--output", sim.output, "Output CSV")->required();
  sim_cmd->add_option("--truth", sim.truth, "Truth sidecar path");

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Optimise hyperparameters");
  fit_args.model.add_to(fit_cmd);
  fit_cmd->add_option("--objective", fit_args.objective,
                      "standard (plain predictive) or robust (weighted)")
      ->check(CLI::IsMember({"standard", "robust"}));
  fit_cmd->add_option("--summary-mode", fit_args.summary_mode,
                      "quantile, mean, or min");
  fit_cmd->add_option("--delta", fit_args.delta, "Summary quantile level");
  fit_cmd->add_option("--learning-rate", fit_args.learning_rate);
  fit_cmd->add_option("--steps", fit_args.steps);
  fit_cmd->add_option("--fd-step", fit_args.fd_step);
  fit_cmd->add_option("--fix", fit_args.fixed, "Parameter names to keep fixed");
  fit_cmd->add_option("input", fit_args.input, "Data CSV")->required();
  fit_cmd->add_option("-o,--output", fit_args.output, "Result JSON")
      ->required();

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Posterior marginals of f");
  pred.model.add_to(pred_cmd);
  pred_cmd->add_flag("--filtered", pred.filtered,
                     "Use filtered instead of smoothed marginals");
  pred_cmd->add_option("--forecast-steps", pred.forecast_steps);
  pred_cmd->add_option("--forecast-dt", pred.forecast_dt);
  pred_cmd->add_option("--at-times", pred.at_times,
                       "Extra prediction times (masked steps)");
  pred_cmd->add_option("input", pred.input, "Data CSV")->required();
  pred_cmd->add_option("-o,--output", pred.output, "Predictions CSV")
      ->required();

  DiagnoseArgs diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Metrics and PIF curves");
  diag.model.add_to(diag_cmd);
  diag_cmd->add_option("--truth", diag.truth, "Truth sidecar CSV");
  diag_cmd->add_option("--predictions", diag.predictions,
                       "Recompute metrics from a predictions CSV");
  diag_cmd->add_flag("--pif", diag.pif, "Compute the influence curve");
  diag_cmd->add_option("--pif-step", diag.pif_step);
  diag_cmd->add_option("--pif-site", diag.pif_site);
  diag_cmd->add_option("--pif-magnitudes", diag.pif_magnitudes,
                       "Contamination magnitudes in sigma units");
  diag_cmd->add_option("--pif-out", diag.pif_out, "PIF curve CSV");
  diag_cmd->add_option("--quantiles", diag.quantiles, "Coverage quantiles");
  diag_cmd->add_option("input", diag.input, "Data CSV")->required();
  diag_cmd->add_option("-o,--output", diag.output, "Metrics JSON");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Runtime scaling benchmark");
  bench_cmd->add_option("--sizes", bench.sizes, "Time-step counts");
  bench_cmd->add_option("--reps", bench.reps, "Repetitions per size");
  bench_cmd->add_option("-o,--output", bench.output, "Timing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (fit_cmd->parsed()) return cmd_fit(fit_args);
    if (pred_cmd->parsed()) return cmd_predict(pred);
    if (diag_cmd->parsed()) return cmd_diagnose(diag);
    if (bench_cmd->parsed()) return cmd_bench(bench);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const DuplicatePoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const GridMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
