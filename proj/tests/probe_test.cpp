#include "gamessl/probe.hpp"

#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>
#include <filesystem>
#include <cstring>
#include <limits>

#include "gamessl/error.hpp"
#include "gamessl/games.hpp"
#include "gamessl/log.hpp"
#include "gamessl/random.hpp"

using namespace gamessl;
using namespace gamessl::probe;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  return z;
}

// Minimum-norm least squares on [1 | Z] via complete orthogonal decomposition.
Eigen::VectorXd pinv_oracle(const Eigen::MatrixXd& z, const std::vector<double>& v) {
  Eigen::MatrixXd a(z.rows(), z.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(z.cols()) = z;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return a.completeOrthogonalDecomposition().pseudoInverse() * b;
}

std::vector<double> noisy_linear(const Eigen::MatrixXd& z, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double y = 0.7 + 0.05 * rng.normal();
    for (Eigen::Index j = 0; j < z.cols(); ++j) y += (j % 2 ? -0.5 : 1.5) * (j + 1) * z(i, j);
    v[static_cast<std::size_t>(i)] = y;
  }
  return v;
}

struct QuietLog {
  QuietLog() {
    log::set_sink([this](log::Level, const std::string& m) { messages.push_back(m); });
  }
  ~QuietLog() { log::reset_sink(); }
  std::vector<std::string> messages;
};

}  // namespace

TEST(FitOls, ExactLinearData) {
  Rng rng(1);
  auto z = random_matrix(50, 2, rng);
  std::vector<double> v(50);
  for (int i = 0; i < 50; ++i) v[i] = 3 + 2 * z(i, 0);
  const auto p = fit_ols(z, v);
  ASSERT_EQ(p.coefficients.size(), 3u);
  EXPECT_NEAR(p.coefficients[0], 3.0, 1e-6);
  EXPECT_NEAR(p.coefficients[1], 2.0, 1e-6);
  EXPECT_NEAR(p.coefficients[2], 0.0, 1e-6);
  EXPECT_NEAR(r_squared(p, z, v), 1.0, 1e-9);
}

TEST(FitOls, ConstantTarget) {
  Rng rng(2);
  auto z = random_matrix(30, 4, rng);
  std::vector<double> v(30, 1.25);
  const auto p = fit_ols(z, v);
  EXPECT_NEAR(p.coefficients[0], 1.25, 1e-12);
  for (std::size_t j = 1; j < p.coefficients.size(); ++j) EXPECT_NEAR(p.coefficients[j], 0.0, 1e-12);
  EXPECT_TRUE(std::isnan(r_squared(p, z, v)));
}

TEST(FitOls, MatchesPseudoInverseOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto z = random_matrix(200, 5, rng);
    const auto v = noisy_linear(z, rng);
    const auto oracle = pinv_oracle(z, v);
    const auto p = fit_ols(z, v);
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(p.coefficients[j], oracle[j], 1e-6);
  }
}

// Offset and stretched columns: damping biases the intercept through the
// column means, so exactness is checked at zero and vanishing damping.
TEST(FitOls, ConvergesToPseudoInverseAsDampingVanishes) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto z = random_matrix(200, 5, rng);
    for (int j = 0; j < 5; ++j) z.col(j) = z.col(j) * (0.1 + j) + Eigen::VectorXd::Constant(200, 3.0 * j - 4);
    const auto v = noisy_linear(z, rng);
    const auto oracle = pinv_oracle(z, v);
    const auto exact = fit_ols(z, v, 0.0);
    const auto tiny = fit_ols(z, v, 1e-12);
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(exact.coefficients[j], oracle[j], 1e-6);
      EXPECT_LT(std::abs(tiny.coefficients[j] - oracle[j]), 1e-5);
    }
  }
}

TEST(FitOls, DampingShrinksTowardsZero) {
  Rng rng(4);
  auto z = random_matrix(100, 3, rng);
  const auto v = noisy_linear(z, rng);
  const auto a = fit_ols(z, v, 0.0), b = fit_ols(z, v, 10.0);
  double na = 0, nb = 0;
  for (int j = 1; j < 4; ++j) {
    na += a.coefficients[j] * a.coefficients[j];
    nb += b.coefficients[j] * b.coefficients[j];
  }
  EXPECT_LT(nb, na);
}

TEST(FitOls, Errors) {
  Eigen::MatrixXd empty(0, 3);
  EXPECT_THROW(fit_ols(empty, std::vector<double>{}), DimensionError);
  Rng rng(5);
  auto z = random_matrix(10, 2, rng);
  EXPECT_THROW(fit_ols(z, std::vector<double>(9, 1.0)), DimensionError);
  // Duplicate column with no damping: singular normal equations.
  z.col(1) = z.col(0);
  std::vector<double> v(10);
  for (int i = 0; i < 10; ++i) v[i] = rng.normal();
  EXPECT_THROW(fit_ols(z, v, 0.0), NumericalError);
  EXPECT_NO_THROW(fit_ols(z, v));
}

TEST(RSquared, InterceptOnlyProbeScoresZero) {
  Rng rng(6);
  const Eigen::MatrixXd none(40, 0);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.normal();
  const auto p = fit_ols(none, v);
  EXPECT_EQ(r_squared(p, none, v), 0.0);
}

TEST(RSquared, PermutedLabelsStayNearZero) {
  Rng rng(7);
  const Eigen::Index d = 8, n = 20 * d;
  auto z = random_matrix(n, d, rng);
  auto v = noisy_linear(z, rng);
  rng.shuffle(v.begin(), v.end());
  EXPECT_LT(r_squared(fit_ols(z, v), z, v), 0.1);

  // Over many draws the mean sits at the chance level d / (n - 1).
  double sum = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    auto zt = random_matrix(n, d, rng);
    std::vector<double> vt(static_cast<std::size_t>(n));
    for (auto& x : vt) x = rng.normal();
    const double r2 = r_squared(fit_ols(zt, vt), zt, vt);
    EXPECT_LT(r2, 0.2);
    sum += r2;
  }
  EXPECT_NEAR(sum / trials, double(d) / double(n - 1), 0.01);
}

TEST(RSquared, InvariantToAffineFeatureRescaling) {
  Rng rng(8);
  auto z = random_matrix(150, 6, rng);
  auto v = noisy_linear(z, rng);
  for (auto& x : v) x += 0.5 * rng.normal();
  const double base = r_squared(fit_ols(z, v), z, v);
  for (int j = 0; j < 6; ++j) {
    auto zt = z;
    zt.col(j) = zt.col(j) * (j % 2 ? -250.0 : 0.003) + Eigen::VectorXd::Constant(150, 17.0);
    EXPECT_NEAR(r_squared(fit_ols(zt, v), zt, v), base, 1e-6) << "column " << j;
  }
}

TEST(Improvement, ReportedArithmetic) {
  EXPECT_NEAR(improvement(0.68, 0.81), 19.0, 1.0);
  EXPECT_NEAR(improvement(0.68, 0.81), 19.1176, 1e-3);
  EXPECT_NEAR(improvement(0.59, 0.89), 51.0, 1.0);
  EXPECT_NEAR(improvement(0.59, 0.89), 50.8475, 1e-3);
  EXPECT_EQ(improvement(0.42, 0.42), 0.0);
  EXPECT_TRUE(std::isnan(improvement(0.0, 0.5)));
  EXPECT_TRUE(std::isnan(improvement(-0.1, 0.5)));
}

TEST(Report, AggregatesSkipNaN) {
  ProbeReport r;
  r.r2 = {0.5, kNaN, 0.1, 0.9};
  EXPECT_EQ(r.min(), 0.1);
  EXPECT_EQ(r.max(), 0.9);
  EXPECT_EQ(r.avg(), (0.5 + 0.1 + 0.9) / 3);
  r.r2 = {kNaN};
  EXPECT_TRUE(std::isnan(r.avg()));
}

TEST(GroupAverage, Examples) {
  ProbeReport r;
  r.r2 = {0.2, 0.4, 0.9, kNaN};
  auto g = group_average(r, {{"one", {2}}, {"pair", {0, 1}}, {"with_nan", {1, 3}}});
  EXPECT_EQ(g[0].r2, 0.9);
  EXPECT_NEAR(g[1].r2, 0.3, 1e-15);
  EXPECT_EQ(g[2].r2, 0.4);
  EXPECT_THROW(group_average(r, {{"empty", {}}}), ConfigError);
  EXPECT_THROW(group_average(r, {{"dup", {1, 1}}}), ConfigError);
  EXPECT_THROW(group_average(r, {{"far", {4}}}), DimensionError);

  const auto parsed = parse_group("defenders=0,1,2,3");
  EXPECT_EQ(parsed.name, "defenders");
  EXPECT_EQ(parsed.indices, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_THROW(parse_group("defenders"), ConfigError);
  EXPECT_THROW(parse_group("d=1,,2"), ConfigError);
  EXPECT_THROW(parse_group("d=x"), ConfigError);
}

namespace {

Manifest pitch_manifest(std::size_t n, std::size_t per_team, std::uint64_t seed) {
  Manifest m;
  m.env = "pitch";
  m.variable_names = games::pitch_variable_names(2 * per_team);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) m.entries.push_back({"unused.png", games::pitch_state_vector(games::sample_pitch(per_team, rng))});
  return m;
}

}  // namespace

TEST(ProbeRepresentations, PerfectRepresentationScoresOne) {
  const auto m = pitch_manifest(500, 2, 9);
  const std::size_t k = m.num_variables(), d = 64;
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(500, d);
  for (std::size_t i = 0; i < 500; ++i)
    for (std::size_t j = 0; j < k; ++j) z(i, j) = m.entries[i].state.values[j];
  const auto r = probe_representations(z, m);
  ASSERT_EQ(r.r2.size(), k);
  for (double x : r.r2) EXPECT_NEAR(x, 1.0, 1e-6);
}

TEST(ProbeRepresentations, DefenderGroupMatchesRecomputation) {
  const auto m = pitch_manifest(300, 2, 10);
  Rng rng(11);
  auto z = random_matrix(300, 16, rng);
  for (std::size_t i = 0; i < 300; ++i) z(i, 0) += 2 * m.entries[i].state.values[0];
  const auto r = probe_representations(z, m);
  // One defender per team at P=4: slot 0 (team 0) and slot 2 (team 1).
  const auto g = group_average(r, {{"defender_x", {0, 8}}});
  EXPECT_EQ(m.variable_names[8], "p2_x");
  EXPECT_DOUBLE_EQ(g[0].r2, (r.r2[0] + r.r2[8]) / 2);
}

TEST(ProbeRepresentations, MaskedRowsNeverEnterFits) {
  // Variable 0 is valid on half the rows; the masked rows carry NaN targets
  // and NaN features, so any leak would poison the result.
  Rng rng(12);
  const std::size_t n = 400, d = 6;
  auto z = random_matrix(n, d, rng);
  Manifest m;
  m.variable_names = {"masked", "full"};
  std::vector<std::size_t> valid_rows;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = i % 2 == 0;
    const double y = 0.3 * z(i, 0) - z(i, 3) + 0.2 * rng.normal();
    m.entries.push_back({"x.png", {{ok ? y : kNaN, y}, {ok, true}}});
    if (ok) valid_rows.push_back(i);
  }
  Eigen::MatrixXd poisoned = z;
  for (std::size_t i = 1; i < n; i += 2) poisoned.row(i).setConstant(kNaN);
  m.variable_names = {"masked"};
  for (auto& e : m.entries) {
    e.state.values.resize(1);
    e.state.valid.resize(1);
  }
  const auto r = probe_representations(poisoned, m);
  ASSERT_TRUE(std::isfinite(r.r2[0]));
  EXPECT_EQ(r.n_valid[0], valid_rows.size());

  Eigen::MatrixXd zs(static_cast<Eigen::Index>(valid_rows.size()), d);
  std::vector<double> v;
  for (std::size_t k = 0; k < valid_rows.size(); ++k) {
    zs.row(k) = z.row(valid_rows[k]);
    v.push_back(m.entries[valid_rows[k]].state.values[0]);
  }
  EXPECT_EQ(r.r2[0], r_squared(fit_ols(zs, v), zs, v));
}

TEST(ProbeRepresentations, TooFewRowsIsNaNWithWarning) {
  QuietLog quiet;
  Rng rng(13);
  auto z = random_matrix(40, 8, rng);
  Manifest m;
  m.variable_names = {"rare", "common"};
  for (int i = 0; i < 40; ++i) {
    const bool rare = i < 5;
    m.entries.push_back({"x.png", {{rare ? 1.0 * i : kNaN, z(i, 1) + 0.1 * rng.normal()}, {rare, true}}});
  }
  const auto r = probe_representations(z, m);
  EXPECT_TRUE(std::isnan(r.r2[0]));
  EXPECT_EQ(r.notes[0], "too few valid rows");
  EXPECT_TRUE(std::isfinite(r.r2[1]));
  EXPECT_FALSE(quiet.messages.empty());

  for (auto& e : m.entries) e.state.valid[1] = false;
  EXPECT_THROW(probe_representations(z, m), ContractError);
}

TEST(ProbeRepresentations, SplitHalfScoresHeldOutRows) {
  QuietLog quiet;
  Rng rng(14);
  auto z = random_matrix(200, 10, rng);
  Manifest m;
  m.variable_names = {"noise"};
  for (int i = 0; i < 200; ++i) m.entries.push_back({"x.png", {{rng.normal()}, {true}}});
  const auto in_sample = probe_representations(z, m);
  const auto held_out = probe_representations(z, m, {kDefaultDamping, true});
  EXPECT_GT(in_sample.r2[0], 0.0);
  EXPECT_LT(held_out.r2[0], in_sample.r2[0]);
}

TEST(ProbeAll, RandomEncoderReportIsStructuredAndDeterministic) {
  QuietLog quiet;
  namespace fs = std::filesystem;
  games::GenerateOptions g;
  g.count = 120;
  g.seed = 3;
  g.out_dir = fs::temp_directory_path() / "gamessl_probe_test";
  fs::remove_all(g.out_dir);
  const auto m = load_manifest(games::generate_dataset(g));

  EncoderConfig c;
  c.input_height = c.input_width = 32;
  c.stage_channels = {8, 16};
  c.blocks_per_stage = {1, 1};
  c.embedding_dim = 16;
  auto enc = build_encoder(c, 5);
  const auto a = probe_all(enc, m), b = probe_all(enc, m);
  ASSERT_EQ(a.r2.size(), m.num_variables());
  EXPECT_LE(a.min(), a.avg());
  EXPECT_LE(a.avg(), a.max());
  for (double x : a.r2) EXPECT_LE(x, 1.0);
  for (std::size_t j = 0; j < a.r2.size(); ++j) EXPECT_EQ(std::memcmp(&a.r2[j], &b.r2[j], sizeof(double)), 0);
}
