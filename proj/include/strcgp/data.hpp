#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "strcgp/errors.hpp"
#include "strcgp/kernels.hpp"
#include "strcgp/linalg.hpp"
#include "strcgp/rng.hpp"

namespace strcgp {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Observations on a fixed spatial grid over strictly increasing times.
/// y(k, j) is the response at time k and site j; `observed` marks entries
/// that carry data and `outlier` marks injected contamination (known only
/// for synthetic datasets). `latent` holds the true function values when a
/// generator produced the data, otherwise it is empty.
struct Dataset {
  Vector times;
  Matrix grid;  // n_sites x d_s (zero columns for purely temporal data)
  Matrix y;     // n_steps x n_sites
  BoolArray observed;
  BoolArray outlier;
  Matrix latent;
  std::string provenance;

  Eigen::Index n_steps() const { return times.size(); }
  Eigen::Index n_sites() const { return grid.rows(); }
  bool has_latent() const { return latent.size() > 0; }

  void validate() const {
    if (times.size() != y.rows() || grid.rows() != y.cols())
      throw InvalidInput("Dataset: shape mismatch");
    if (observed.rows() != y.rows() || observed.cols() != y.cols())
      throw InvalidInput("Dataset: mask shape mismatch");
    for (Eigen::Index k = 1; k < times.size(); ++k)
      if (!(times[k] > times[k - 1]))
        throw InvalidInput("Dataset: times must be strictly increasing");
  }
};

/// Configuration of the synthetic generators. The temporal preset draws a
/// Matern-3/2 GP sample (centred), adds Gaussian noise, and replaces a
/// fraction of points with draws from N(outlier_mean, outlier_sd^2). The
/// spatio-temporal preset evaluates
///   f(s1, s2, t) = sin(2 pi t) s1^2 + cos(2 pi t) s2^2
/// on a square grid, adds noise, and in the half-plane s1 < 0 replaces each
/// point with probability outlier_rate by a draw from U([-8,-6] u [6,8]).
struct GeneratorConfig {
  std::uint64_t seed = 0;

  // Temporal preset.
  int n_steps = 200;
  double t_start = 0.0;
  double t_end = 1.0;
  double lengthscale = 0.1;
  double amplitude = std::sqrt(2.0);  // sigma_kt
  double noise_sd = 0.5;
  double outlier_rate = 0.05;
  double outlier_mean = 5.0;
  double outlier_sd = 1.0;
  // Restricts outlier positions to a time window (focussed contamination).
  std::optional<std::pair<double, double>> outlier_window;

  // Spatio-temporal preset.
  int grid_per_axis = 25;
  double s_min = -1.0;
  double s_max = 1.0;

  static GeneratorConfig temporal_matern(std::uint64_t seed) {
    GeneratorConfig c;
    c.seed = seed;
    return c;
  }

  static GeneratorConfig st_quadratic(std::uint64_t seed) {
    GeneratorConfig c;
    c.seed = seed;
    c.n_steps = 10;
    c.t_start = 0.2;
    c.t_end = 0.8;
    c.noise_sd = 0.2;
    c.outlier_rate = 0.1;
    return c;
  }
};

namespace detail {

// Sub-stream ids so removing one source of randomness (e.g. outliers)
// leaves the others untouched.
inline constexpr std::uint64_t kStreamLatent = 1;
inline constexpr std::uint64_t kStreamNoise = 2;
inline constexpr std::uint64_t kStreamOutlierPos = 3;
inline constexpr std::uint64_t kStreamOutlierVal = 4;

inline Vector linspace(double lo, double hi, int n) {
  Vector v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) v[i] = lo + h * i;
  return v;
}

}  // namespace detail

/// Draws one path from the temporal GP prior, centres it, adds noise, and
/// injects replacement outliers at distinct random positions.
inline Dataset gen_temporal(const GeneratorConfig& config) {
  const int n = config.n_steps;
  if (n < 2) throw InvalidInput("gen_temporal: need at least two steps");

  Dataset data;
  data.times = detail::linspace(config.t_start, config.t_end, n);
  data.grid = Matrix::Zero(1, 0);
  data.provenance =
      "gen_temporal(seed=" + std::to_string(config.seed) + ")";

  KernelSpec prior;
  prior.temporal = TemporalKernel::Matern32;
  prior.temporal_lengthscale = config.lengthscale;
  prior.temporal_amplitude = config.amplitude;
  prior.noise_variance = config.noise_sd * config.noise_sd;

  Matrix k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      k(i, j) = temporal_kernel_value(prior, data.times[i], data.times[j]);
  k.diagonal().array() += 1e-10 * config.amplitude * config.amplitude;

  CounterRng latent_rng(config.seed, detail::kStreamLatent);
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = latent_rng.normal();
  Vector f = Eigen::LLT<Matrix>(k).matrixL() * z;
  f.array() -= f.mean();  // centre the sample path

  CounterRng noise_rng(config.seed, detail::kStreamNoise);
  data.latent = f;
  data.y.resize(n, 1);
  for (int i = 0; i < n; ++i)
    data.y(i, 0) = f[i] + config.noise_sd * noise_rng.normal();

  data.observed = BoolArray::Constant(n, 1, true);
  data.outlier = BoolArray::Constant(n, 1, false);

  const int n_out = static_cast<int>(std::lround(config.outlier_rate * n));
  if (n_out > 0) {
    std::vector<int> eligible;
    for (int i = 0; i < n; ++i) {
      if (config.outlier_window &&
          (data.times[i] < config.outlier_window->first ||
           data.times[i] > config.outlier_window->second))
        continue;
      eligible.push_back(i);
    }
    if (static_cast<int>(eligible.size()) < n_out)
      throw InvalidInput("gen_temporal: outlier window too narrow");
    CounterRng pos_rng(config.seed, detail::kStreamOutlierPos);
    for (int i = 0; i < n_out; ++i) {  // partial Fisher-Yates
      const auto j =
          i + static_cast<int>(pos_rng.below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
    }
    CounterRng val_rng(config.seed, detail::kStreamOutlierVal);
    for (int i = 0; i < n_out; ++i) {
      const int idx = eligible[i];
      data.y(idx, 0) = val_rng.normal(config.outlier_mean, config.outlier_sd);
      data.outlier(idx, 0) = true;
    }
  }
  return data;
}

inline double st_quadratic_latent(double s1, double s2, double t) {
  const double two_pi = 2.0 * 3.14159265358979323846;
  return std::sin(two_pi * t) * s1 * s1 + std::cos(two_pi * t) * s2 * s2;
}

/// Deterministic quadratic-in-space, periodic-in-time latent surface with
/// additive noise and replacement outliers confined to s1 < 0.
inline Dataset gen_spatiotemporal(const GeneratorConfig& config) {
  const int g = config.grid_per_axis;
  if (g < 2) throw InvalidInput("gen_spatiotemporal: grid_per_axis < 2");
  const int n_s = g * g;
  const int n_t = config.n_steps;

  Dataset data;
  data.times = detail::linspace(config.t_start, config.t_end, n_t);
  data.grid.resize(n_s, 2);
  const Vector axis = detail::linspace(config.s_min, config.s_max, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      data.grid(i * g + j, 0) = axis[i];
      data.grid(i * g + j, 1) = axis[j];
    }
  data.provenance =
      "gen_spatiotemporal(seed=" + std::to_string(config.seed) + ")";

  data.latent.resize(n_t, n_s);
  data.y.resize(n_t, n_s);
  data.observed = BoolArray::Constant(n_t, n_s, true);
  data.outlier = BoolArray::Constant(n_t, n_s, false);

  CounterRng noise_rng(config.seed, detail::kStreamNoise);
  for (int k = 0; k < n_t; ++k)
    for (int j = 0; j < n_s; ++j) {
      data.latent(k, j) = st_quadratic_latent(data.grid(j, 0),
                                              data.grid(j, 1), data.times[k]);
      data.y(k, j) = data.latent(k, j) + config.noise_sd * noise_rng.normal();
    }

  if (config.outlier_rate > 0.0) {
    CounterRng pos_rng(config.seed, detail::kStreamOutlierPos);
    CounterRng val_rng(config.seed, detail::kStreamOutlierVal);
    for (int k = 0; k < n_t; ++k)
      for (int j = 0; j < n_s; ++j) {
        if (data.grid(j, 0) >= 0.0) continue;
        if (pos_rng.uniform() >= config.outlier_rate) continue;
        const double sign = val_rng.uniform() < 0.5 ? -1.0 : 1.0;
        data.y(k, j) = sign * val_rng.uniform(6.0, 8.0);
        data.outlier(k, j) = true;
      }
  }
  return data;
}

/// Appends fully masked sites (prediction targets) to a dataset.
inline Dataset with_masked_sites(const Dataset& base, const Matrix& sites) {
  if (sites.cols() != base.grid.cols())
    throw GridMismatch("with_masked_sites: spatial dimension mismatch");
  Dataset out = base;
  const Eigen::Index n_t = base.n_steps();
  const Eigen::Index n0 = base.n_sites();
  const Eigen::Index extra = sites.rows();
  out.grid.conservativeResize(n0 + extra, Eigen::NoChange);
  out.grid.bottomRows(extra) = sites;
  out.y.conservativeResize(Eigen::NoChange, n0 + extra);
  out.y.rightCols(extra).setZero();
  out.observed.conservativeResize(Eigen::NoChange, n0 + extra);
  out.observed.rightCols(extra) = false;
  out.outlier.conservativeResize(Eigen::NoChange, n0 + extra);
  out.outlier.rightCols(extra) = false;
  if (out.has_latent()) {
    out.latent.conservativeResize(n_t, n0 + extra);
    out.latent.rightCols(extra).setZero();
  }
  return out;
}

/// Inserts fully masked steps at the given times (prediction targets).
/// Times equal to an existing step are ignored.
inline Dataset with_masked_times(const Dataset& base,
                                 const std::vector<double>& times) {
  Dataset out = base;
  std::vector<double> merged(base.times.data(),
                             base.times.data() + base.times.size());
  std::vector<double> extra;
  for (double t : times)
    if (!std::binary_search(merged.begin(), merged.end(), t)) extra.push_back(t);
  if (extra.empty()) return out;
  merged.insert(merged.end(), extra.begin(), extra.end());
  std::sort(merged.begin(), merged.end());

  const Eigen::Index n_t = static_cast<Eigen::Index>(merged.size());
  const Eigen::Index n_s = base.n_sites();
  out.times = Eigen::Map<const Vector>(merged.data(), n_t);
  out.y = Matrix::Zero(n_t, n_s);
  out.observed = BoolArray::Constant(n_t, n_s, false);
  out.outlier = BoolArray::Constant(n_t, n_s, false);
  out.latent = Matrix();
  Eigen::Index src = 0;
  for (Eigen::Index k = 0; k < n_t; ++k) {
    if (src < base.n_steps() && base.times[src] == out.times[k]) {
      out.y.row(k) = base.y.row(src);
      out.observed.row(k) = base.observed.row(src);
      out.outlier.row(k) = base.outlier.row(src);
      ++src;
    }
  }
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
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

inline double parse_double(const std::string& s, int line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("csv line " + std::to_string(line_no) +
                     ": cannot parse number '" + s + "'");
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
    ++pos;
  if (pos != s.size())
    throw ParseError("csv line " + std::to_string(line_no) +
                     ": trailing characters in '" + s + "'");
  return v;
}

}  // namespace detail

/// Writes a dataset as `t,s1,...,s{d},y` rows (one per time/site pair, time-
/// major). Missing responses are written as an empty y field.
inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  const Eigen::Index d = data.grid.cols();
  out << "t";
  for (Eigen::Index c = 0; c < d; ++c) out << ",s" << (c + 1);
  out << ",y\n";
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
      out << detail::format_double(data.times[k]);
      for (Eigen::Index c = 0; c < d; ++c)
        out << "," << detail::format_double(data.grid(j, c));
      out << ",";
      if (data.observed(k, j)) out << detail::format_double(data.y(k, j));
      out << "\n";
    }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

/// Sidecar with the generator truth: latent value and outlier flag per node.
inline void write_truth_csv(const Dataset& data, const std::string& path) {
  if (!data.has_latent())
    throw InvalidInput("write_truth_csv: dataset has no latent truth");
  std::ofstream out(path);
  if (!out) throw IoError("write_truth_csv: cannot open " + path);
  const Eigen::Index d = data.grid.cols();
  out << "t";
  for (Eigen::Index c = 0; c < d; ++c) out << ",s" << (c + 1);
  out << ",f,outlier\n";
  for (Eigen::Index k = 0; k < data.n_steps(); ++k)
    for (Eigen::Index j = 0; j < data.n_sites(); ++j) {
      out << detail::format_double(data.times[k]);
      for (Eigen::Index c = 0; c < d; ++c)
        out << "," << detail::format_double(data.grid(j, c));
      out << "," << detail::format_double(data.latent(k, j)) << ","
          << (data.outlier(k, j) ? 1 : 0) << "\n";
    }
}

/// Reads the CSV layout written by write_csv. Rows may appear in any order
/// but every timestamp must carry exactly the same spatial grid; duplicate
/// (t, site) rows and ragged grids are rejected.
inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw ParseError("read_csv: empty file " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header.front() != "t" || header.back() != "y")
    throw ParseError("read_csv: header must be t,s1,...,y");
  const int d = static_cast<int>(header.size()) - 2;
  for (int c = 0; c < d; ++c)
    if (header[c + 1] != "s" + std::to_string(c + 1))
      throw ParseError("read_csv: unexpected header column '" +
                       header[c + 1] + "'");

  struct Row {
    double t;
    std::vector<double> s;
    double y;
    bool missing;
  };
  std::vector<Row> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 2)
      throw ParseError("csv line " + std::to_string(line_no) +
                       ": expected " + std::to_string(d + 2) + " fields");
    Row r;
    r.t = detail::parse_double(fields[0], line_no);
    r.s.resize(d);
    for (int c = 0; c < d; ++c)
      r.s[c] = detail::parse_double(fields[c + 1], line_no);
    r.missing = fields.back().empty();
    r.y = r.missing ? 0.0 : detail::parse_double(fields.back(), line_no);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError("read_csv: no data rows in " + path);

  std::vector<double> times;
  for (const auto& r : rows) times.push_back(r.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::map<double, Eigen::Index> time_index;
  for (std::size_t i = 0; i < times.size(); ++i)
    time_index[times[i]] = static_cast<Eigen::Index>(i);

  // The grid is fixed by the rows of the earliest timestamp, in file order.
  std::map<std::vector<double>, Eigen::Index> site_index;
  std::vector<std::vector<double>> sites;
  for (const auto& r : rows) {
    if (r.t != times.front()) continue;
    if (site_index.count(r.s)) continue;  // duplicate caught below
    site_index[r.s] = static_cast<Eigen::Index>(sites.size());
    sites.push_back(r.s);
  }

  const auto n_t = static_cast<Eigen::Index>(times.size());
  const auto n_s = static_cast<Eigen::Index>(sites.size());
  Dataset data;
  data.times = Eigen::Map<const Vector>(times.data(), n_t);
  data.grid.resize(n_s, d);
  for (Eigen::Index j = 0; j < n_s; ++j)
    for (int c = 0; c < d; ++c) data.grid(j, c) = sites[j][c];
  data.y = Matrix::Zero(n_t, n_s);
  data.observed = BoolArray::Constant(n_t, n_s, false);
  data.outlier = BoolArray::Constant(n_t, n_s, false);
  data.provenance = "read_csv(" + path + ")";

  BoolArray seen = BoolArray::Constant(n_t, n_s, false);
  for (const auto& r : rows) {
    const auto it = site_index.find(r.s);
    if (it == site_index.end())
      throw GridMismatch("read_csv: location not present at the first "
                         "timestamp (ragged grid)");
    const Eigen::Index k = time_index[r.t];
    const Eigen::Index j = it->second;
    if (seen(k, j))
      throw DuplicatePoint("read_csv: duplicate (t, site) row at t=" +
                           detail::format_double(r.t));
    seen(k, j) = true;
    if (!r.missing) {
      data.y(k, j) = r.y;
      data.observed(k, j) = true;
    }
  }
  if (!seen.all())
    throw GridMismatch("read_csv: some timestamps are missing grid locations");
  data.validate();
  return data;
}

}  // namespace strcgp
