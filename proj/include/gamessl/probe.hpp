#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gamessl/dataset.hpp"
#include "gamessl/encoder.hpp"

namespace gamessl::probe {

inline constexpr double kDefaultDamping = 1e-8;

// v ~ coefficients[0] + sum_j coefficients[j+1] * z_j
struct LinearProbe {
  std::vector<double> coefficients;
  std::size_t variable_index = 0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& z) const;
};

// Least squares with an intercept. Features are centered and scaled to unit
// variance, the normal equations are damped by `damping` times the mean
// diagonal of the scaled Gram matrix and solved by Cholesky, then the
// coefficients are mapped back to the original feature scale. damping = 0 is
// plain OLS. Zero-variance features get coefficient 0 when damping > 0.
// Throws DimensionError for n = 0 or mismatched sizes and NumericalError if
// the damped system is still singular.
LinearProbe fit_ols(const Eigen::MatrixXd& z, std::span<const double> v, double damping = kDefaultDamping);

// 1 - SS_res / SS_tot. NaN when v is constant.
double r_squared(const LinearProbe& probe, const Eigen::MatrixXd& z, std::span<const double> v);

// 100 * (method - base) / base; NaN when base <= 0.
double improvement(double r2_base, double r2_method);

struct Group {
  std::string name;
  std::vector<std::size_t> indices;
};

struct GroupResult {
  std::string name;
  std::vector<std::size_t> indices;
  double r2 = 0;
};

struct ProbeReport {
  std::string label;
  std::string env;
  std::vector<std::string> variable_names;
  std::vector<std::size_t> n_valid;
  std::vector<double> r2;
  // Empty, "constant target" or "too few valid rows".
  std::vector<std::string> notes;
  std::vector<GroupResult> groups;

  // Over non-NaN entries; NaN when every entry is NaN.
  double min() const;
  double avg() const;
  double max() const;
};

// Mean of the non-NaN R² values in each group. Throws ConfigError for an
// empty group or a repeated index, DimensionError for an index out of range.
std::vector<GroupResult> group_average(const ProbeReport& report, const std::vector<Group>& groups);

// "defenders=0,1,2,3" -> Group; throws ConfigError on malformed input.
Group parse_group(const std::string& spec);

struct ProbeOptions {
  double damping = kDefaultDamping;
  // Fit on the first half of each variable's valid rows and score on the
  // second half instead of the default in-sample protocol.
  bool split_half = false;
};

// Probes precomputed representations (row i belongs to manifest entry i).
// Rows whose target is masked never enter a fit. Variables with at most d
// valid rows are reported as NaN with a warning; a warning is also logged
// below 4d rows. Throws ContractError if no variable can be probed.
ProbeReport probe_representations(const Eigen::MatrixXd& z, const Manifest& manifest,
                                  const ProbeOptions& options = {});

// Encodes every eval frame once in eval mode, then probes each variable.
ProbeReport probe_all(Encoder& encoder, const Manifest& manifest, const ProbeOptions& options = {});

Eigen::MatrixXd to_matrix(const Tensor& t);

}  // namespace gamessl::probe
