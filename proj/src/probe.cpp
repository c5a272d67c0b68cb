#include "gamessl/probe.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gamessl/error.hpp"
#include "gamessl/log.hpp"

namespace gamessl::probe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

template <class Op>
double reduce_finite(const std::vector<double>& v, double init, Op op) {
  double acc = init;
  bool any = false;
  for (double x : v) {
    if (std::isnan(x)) continue;
    acc = op(acc, x);
    any = true;
  }
  return any ? acc : kNaN;
}

std::vector<std::size_t> parse_indices(const std::string& list, const std::string& spec) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = std::min(list.find(',', pos), list.size());
    const auto item = list.substr(pos, comma - pos);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad group '" + spec + "': expected name=i,j,...");
    }
    out.push_back(std::stoul(item));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

double LinearProbe::predict(const Eigen::Ref<const Eigen::RowVectorXd>& z) const {
  double y = coefficients[0];
  for (Eigen::Index j = 0; j < z.size(); ++j) y += coefficients[static_cast<std::size_t>(j) + 1] * z[j];
  return y;
}

LinearProbe fit_ols(const Eigen::MatrixXd& z, std::span<const double> v, double damping) {
  const auto n = z.rows(), d = z.cols();
  if (n == 0) throw DimensionError("fit_ols: no rows to fit");
  if (static_cast<std::size_t>(n) != v.size()) {
    throw DimensionError("fit_ols: " + std::to_string(n) + " feature rows but " + std::to_string(v.size()) +
                         " targets");
  }
  if (!(damping >= 0.0)) throw ConfigError("fit_ols: damping must be >= 0");
  if (n < d + 1) {
    log::warn("fit_ols: " + std::to_string(n) + " rows for " + std::to_string(d) +
              " features; the fit is underdetermined");
  }

  const Eigen::RowVectorXd mean = z.colwise().mean();
  Eigen::MatrixXd x = z.rowwise() - mean;
  Eigen::RowVectorXd scale = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(scale[j] > 0.0)) scale[j] = 1.0;
  }
  x.array().rowwise() /= scale.array();

  const auto target = as_vector(v);
  const double v_mean = target.mean();
  const Eigen::VectorXd y = target.array() - v_mean;

  Eigen::MatrixXd gram = x.transpose() * x;
  const double ridge = d > 0 ? damping * gram.diagonal().mean() : 0.0;
  gram.diagonal().array() += ridge;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(d);
  if (d > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("fit_ols: normal equations are singular (damping " + std::to_string(damping) + ")");
    }
    gamma = llt.solve(x.transpose() * y);
  }

  LinearProbe probe;
  probe.coefficients.assign(static_cast<std::size_t>(d) + 1, 0.0);
  double intercept = v_mean;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double beta = gamma[j] / scale[j];
    probe.coefficients[static_cast<std::size_t>(j) + 1] = beta;
    intercept -= beta * mean[j];
  }
  probe.coefficients[0] = intercept;
  for (double c : probe.coefficients) {
    if (!std::isfinite(c)) throw NumericalError("fit_ols: non-finite coefficient");
  }
  return probe;
}

double r_squared(const LinearProbe& probe, const Eigen::MatrixXd& z, std::span<const double> v) {
  if (static_cast<std::size_t>(z.rows()) != v.size() ||
      static_cast<std::size_t>(z.cols()) + 1 != probe.coefficients.size()) {
    throw DimensionError("r_squared: features are " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                         " for " + std::to_string(v.size()) + " targets and a probe of " +
                         std::to_string(probe.coefficients.size() - 1) + " features");
  }
  const double mean = as_vector(v).mean();
  // Both sums use the same loop so an intercept-only probe at the mean
  // scores exactly 0.
  double ss_tot = 0, ss_res = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double t = v[static_cast<std::size_t>(i)] - mean;
    const double r = v[static_cast<std::size_t>(i)] - probe.predict(z.row(i));
    ss_tot += t * t;
    ss_res += r * r;
  }
  if (!(ss_tot > 0.0)) return kNaN;
  return 1.0 - ss_res / ss_tot;
}

double improvement(double r2_base, double r2_method) {
  if (!(r2_base > 0.0)) return kNaN;
  return 100.0 * (r2_method - r2_base) / r2_base;
}

double ProbeReport::min() const {
  return reduce_finite(r2, std::numeric_limits<double>::infinity(), [](double a, double b) { return std::min(a, b); });
}

double ProbeReport::max() const {
  return reduce_finite(r2, -std::numeric_limits<double>::infinity(), [](double a, double b) { return std::max(a, b); });
}

double ProbeReport::avg() const {
  std::size_t n = 0;
  const double s = reduce_finite(r2, 0.0, [&](double a, double b) {
    ++n;
    return a + b;
  });
  return n > 0 ? s / static_cast<double>(n) : kNaN;
}

std::vector<GroupResult> group_average(const ProbeReport& report, const std::vector<Group>& groups) {
  std::vector<GroupResult> out;
  for (const auto& g : groups) {
    if (g.indices.empty()) throw ConfigError("group '" + g.name + "' is empty");
    std::set<std::size_t> seen;
    double sum = 0;
    std::size_t n = 0;
    for (auto i : g.indices) {
      if (i >= report.r2.size()) {
        throw DimensionError("group '" + g.name + "' index " + std::to_string(i) + " out of range for " +
                             std::to_string(report.r2.size()) + " variables");
      }
      if (!seen.insert(i).second) throw ConfigError("group '" + g.name + "' repeats index " + std::to_string(i));
      if (std::isnan(report.r2[i])) continue;
      sum += report.r2[i];
      ++n;
    }
    out.push_back({g.name, g.indices, n > 0 ? sum / static_cast<double>(n) : kNaN});
  }
  return out;
}

Group parse_group(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("bad group '" + spec + "': expected name=i,j,...");
  return {spec.substr(0, eq), parse_indices(spec.substr(eq + 1), spec)};
}

ProbeReport probe_representations(const Eigen::MatrixXd& z, const Manifest& manifest, const ProbeOptions& options) {
  if (static_cast<std::size_t>(z.rows()) != manifest.entries.size()) {
    throw DimensionError("probe: " + std::to_string(z.rows()) + " representations for " +
                         std::to_string(manifest.entries.size()) + " manifest entries");
  }
  const std::size_t d = static_cast<std::size_t>(z.cols());
  ProbeReport report;
  report.env = manifest.env;
  report.variable_names = manifest.variable_names;
  std::size_t probed = 0;
  for (std::size_t j = 0; j < manifest.num_variables(); ++j) {
    const auto rows = filter_valid(manifest, j);
    report.n_valid.push_back(rows.size());
    const auto& name = manifest.variable_names[j];
    const std::size_t fit_rows = options.split_half ? rows.size() / 2 : rows.size();
    if (fit_rows <= d) {
      log::warn("probe: variable '" + name + "' has " + std::to_string(rows.size()) +
                " valid rows, too few for a " + std::to_string(d) + "-dimensional probe");
      report.r2.push_back(kNaN);
      report.notes.emplace_back("too few valid rows");
      continue;
    }
    if (fit_rows < 4 * d) {
      log::warn("probe: variable '" + name + "' has " + std::to_string(fit_rows) + " fitting rows for d=" +
                std::to_string(d) + "; in-sample R² is inflated below 4d");
    }
    Eigen::MatrixXd zs(static_cast<Eigen::Index>(rows.size()), z.cols());
    std::vector<double> v(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      zs.row(static_cast<Eigen::Index>(r)) = z.row(static_cast<Eigen::Index>(rows[r]));
      v[r] = manifest.entries[rows[r]].state.values[j];
    }
    double r2;
    if (options.split_half) {
      const auto h = static_cast<Eigen::Index>(fit_rows);
      const std::span<const double> all(v);
      const auto fit = fit_ols(zs.topRows(h), all.first(fit_rows), options.damping);
      r2 = r_squared(fit, zs.bottomRows(zs.rows() - h), all.subspan(fit_rows));
    } else {
      r2 = r_squared(fit_ols(zs, v, options.damping), zs, v);
    }
    report.r2.push_back(r2);
    report.notes.emplace_back(std::isnan(r2) ? "constant target" : "");
    if (std::isnan(r2)) log::warn("probe: variable '" + name + "' is constant on the eval set");
    ++probed;
  }
  if (probed == 0) throw ContractError("probe: no variable has enough valid rows to fit");
  return report;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("to_matrix expects a rank-2 tensor, got " + to_string(t.shape()));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[i * t.dim(1) + j];
  return m;
}

ProbeReport probe_all(Encoder& encoder, const Manifest& manifest, const ProbeOptions& options) {
  const auto& cfg = encoder.config();
  const auto frames = load_frames(manifest, cfg.input_height, cfg.input_width);
  return probe_representations(to_matrix(encode(encoder, frames, nn::Mode::Eval)), manifest, options);
}

}  // namespace gamessl::probe
