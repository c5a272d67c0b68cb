// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 4 7      run a subset
//
// Criterion 6 trains three encoders at desk scale and takes a while; the
// others finish in seconds.

#include <Eigen/Dense>
#include <algorithm>
#include <cfloat>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gamessl/dataset.hpp"
#include "gamessl/experiment.hpp"
#include "gamessl/games.hpp"
#include "gamessl/log.hpp"
#include "gamessl/ops.hpp"
#include "gamessl/probe.hpp"
#include "gamessl/ssl.hpp"
#include "gamessl/trainer.hpp"
#include "gradcheck.hpp"
#include "loss_oracles.hpp"

using namespace gamessl;
namespace fs = std::filesystem;
namespace gt = gamessl::testing;
namespace oracle = gamessl::testing::oracle;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Collects failures; the first few end up in the detail text.
struct Verdict {
  std::vector<std::string> failures;
  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures.empty()) return {true, summary};
    std::string d = summary;
    for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 4); ++i) d += "; " + failures[i];
    if (failures.size() > 4) d += fmt("; and %zu more", failures.size() - 4);
    return {false, d};
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / "gamessl_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

template <class T>
struct Precision;
template <>
struct Precision<float> {
  static constexpr double h = 1e-3, tol = 1e-3;
};
template <>
struct Precision<double> {
  static constexpr double h = 1e-6, tol = 1e-5;
};

template <class T>
struct GradSuite {
  using Tn = BasicTensor<T>;
  Rng rng{2024};
  Verdict& verdict;
  std::size_t ops_checked = 0;
  double worst = 0;
  std::string worst_name;

  explicit GradSuite(Verdict& v) : verdict(v) {}

  Tn rand(Shape s, double lo = -1, double hi = 1) { return gt::random_tensor<T>(std::move(s), rng, lo, hi); }
  Tn away_from_zero(Shape s) {
    Tn t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>((rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0));
    return t;
  }

  // d/d(inputs) of sum(op(inputs) * R) for fixed random R.
  template <class Op>
  void check(const std::string& name, const Op& op, std::vector<Tn> inputs) {
    const auto out = op(inputs, static_cast<BasicTape<T>*>(nullptr));
    const auto weights = gt::random_tensor<double>(out.shape(), rng);
    auto loss = [&](const auto& in, auto* tape) {
      using U = typename std::decay_t<decltype(in[0])>::value_type;
      return gt::project(op(in, tape), gt::cast<U>(weights), tape);
    };
    const auto report = gt::gradcheck<T>(loss, inputs, 24, Precision<T>::h, rng.next_u64());
    ++ops_checked;
    if (report.max_rel_error > worst) {
      worst = report.max_rel_error;
      worst_name = name;
    }
    const char* bits = sizeof(T) == 4 ? "32-bit" : "64-bit";
    verdict.require(report.coordinates >= 20, fmt("%s %s: only %zu coordinates", name.c_str(), bits, report.coordinates));
    verdict.require(report.max_rel_error < Precision<T>::tol,
                    fmt("%s %s: relative error %.2e", name.c_str(), bits, report.max_rel_error));
  }

  void run() {
    auto bn = [](ops::Mode mode, Tn m, Tn v) {
      return [=](const auto& in, auto* tape) {
        using U = typename std::decay_t<decltype(in[0])>::value_type;
        auto rm = gt::cast<U>(m), rv = gt::cast<U>(v);
        return ops::batch_norm(in[0], in[1], in[2], rm, rv, {mode, 0.1, 1e-5}, tape);
      };
    };
    check("matmul", [](const auto& in, auto* t) { return ops::matmul(in[0], in[1], t); }, {rand({4, 5}), rand({5, 6})});
    check("transpose", [](const auto& in, auto* t) { return ops::transpose(in[0], t); }, {rand({4, 7})});
    check("linear", [](const auto& in, auto* t) { return ops::linear(in[0], in[1], in[2], t); },
          {rand({4, 6}), rand({5, 6}), rand({5})});
    check("add", [](const auto& in, auto* t) { return ops::add(in[0], in[1], t); }, {rand({4, 6}), rand({4, 6})});
    check("sub", [](const auto& in, auto* t) { return ops::sub(in[0], in[1], t); }, {rand({4, 6}), rand({4, 6})});
    check("mul", [](const auto& in, auto* t) { return ops::mul(in[0], in[1], t); }, {rand({4, 6}), rand({4, 6})});
    check("scale", [](const auto& in, auto* t) { return ops::scale(in[0], gt::constant(in[0], -2.5), t); },
          {rand({4, 6})});
    check("add_scalar", [](const auto& in, auto* t) { return ops::add_scalar(in[0], gt::constant(in[0], 0.75), t); },
          {rand({4, 6})});
    check("relu", [](const auto& in, auto* t) { return ops::relu(in[0], t); }, {away_from_zero({5, 6})});
    check("conv2d stride 2 pad 1", [](const auto& in, auto* t) { return ops::conv2d(in[0], in[1], 2, 1, t); },
          {rand({2, 3, 5, 5}), rand({4, 3, 3, 3})});
    check("conv2d 1x1", [](const auto& in, auto* t) { return ops::conv2d(in[0], in[1], 1, 0, t); },
          {rand({2, 3, 4, 4}), rand({5, 3, 1, 1})});
    check("batch_norm train 4d", bn(ops::Mode::Train, Tn::zeros({3}), Tn::ones({3})),
          {rand({4, 3, 3, 3}), rand({3}, 0.5, 1.5), rand({3})});
    check("batch_norm train 2d", bn(ops::Mode::Train, Tn::zeros({4}), Tn::ones({4})),
          {rand({6, 4}), rand({4}, 0.5, 1.5), rand({4})});
    check("batch_norm eval", bn(ops::Mode::Eval, rand({3}), rand({3}, 0.5, 2.0)),
          {rand({3, 3, 2, 2}), rand({3}), rand({3})});
    check("global_avg_pool", [](const auto& in, auto* t) { return ops::global_avg_pool(in[0], t); },
          {rand({2, 3, 4, 4})});
    check("l2_normalize", [](const auto& in, auto* t) { return ops::l2_normalize(in[0], gt::constant(in[0], 1e-12), t); },
          {rand({4, 6})});
    check("log_softmax", [](const auto& in, auto* t) { return ops::log_softmax(in[0], t); }, {rand({4, 6}, -2, 2)});
    check("fill_diagonal", [](const auto& in, auto* t) { return ops::fill_diagonal(in[0], gt::constant(in[0], -7), t); },
          {rand({5, 5})});
    check("pick", [](const auto& in, auto* t) { return ops::pick(in[0], {4, 0, 2, 5, 1}, t); }, {rand({5, 6})});
    check("sum", [](const auto& in, auto* t) { return ops::sum(in[0], t); }, {rand({4, 6})});
    check("mean", [](const auto& in, auto* t) { return ops::mean(in[0], t); }, {rand({4, 6})});
    check("row_sum", [](const auto& in, auto* t) { return ops::row_sum(in[0], t); }, {rand({4, 6})});
    check("slice_rows", [](const auto& in, auto* t) { return ops::slice_rows(in[0], 1, 4, t); }, {rand({5, 6})});
    check("concat_rows", [](const auto& in, auto* t) { return ops::concat_rows(in[0], in[1], t); },
          {rand({2, 3, 2}), rand({3, 3, 2})});
    check("nt_xent", [](const auto& in, auto* t) { return ssl::nt_xent_loss(in[0], 0.2, t); }, {rand({6, 5})});
    const auto target = rand({5, 6});
    check("byol", [&](const auto& in, auto* t) {
      using U = typename std::decay_t<decltype(in[0])>::value_type;
      return ssl::byol_loss(in[0], gt::cast<U>(target), t);
    }, {rand({5, 6})});
    const auto q1 = gt::cast<T>(ssl::sinkhorn(gt::cast<double>(rand({6, 4})), 0.5, 3));
    const auto q2 = gt::cast<T>(ssl::sinkhorn(gt::cast<double>(rand({6, 4})), 0.5, 3));
    check("swapped_prediction", [&](const auto& in, auto* t) {
      using U = typename std::decay_t<decltype(in[0])>::value_type;
      return ssl::swapped_prediction_loss(in[0], in[1], gt::cast<U>(q1), gt::cast<U>(q2), 0.1, t);
    }, {rand({6, 4}), rand({6, 4})});
  }
};

Outcome gradient_correctness() {
  Verdict v;
  GradSuite<float> f(v);
  f.run();
  GradSuite<double> d(v);
  d.run();
  return v.outcome(fmt("%zu ops x 2 precisions; worst 32-bit %.2e (%s), worst 64-bit %.2e (%s)", f.ops_checked,
                       f.worst, f.worst_name.c_str(), d.worst, d.worst_name.c_str()));
}

// ---------------------------------------------------------------------------
// 2. Loss oracles

Outcome loss_oracles() {
  Verdict v;
  Rng rng(31);
  double nt = 0, by = 0, sw = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8), p = 2 + rng.below(15);
    const double tau = rng.uniform(0.05, 1.0);
    const auto z = gt::random_tensor<double>({2 * n, p}, rng);
    nt = std::max(nt, std::abs(ssl::nt_xent_loss(z, tau).item() - oracle::nt_xent(z, tau)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(16), p = 2 + rng.below(15);
    const auto pr = gt::random_tensor<float>({b, p}, rng), zt = gt::random_tensor<float>({b, p}, rng);
    by = std::max(by, std::abs(ssl::byol_loss(pr, zt).item() - oracle::byol(gt::cast<double>(pr), gt::cast<double>(zt))));
  }
  ssl::SwAVConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 2 + rng.below(31), p = 4 + rng.below(13), k = 3 + rng.below(30);
    const auto z1 = gt::random_tensor<float>({b, p}, rng), z2 = gt::random_tensor<float>({b, p}, rng);
    auto c = gt::random_tensor<float>({p, k}, rng);
    ssl::prototype_renormalize(c, rng);
    const double expected = oracle::swav(gt::cast<double>(z1), gt::cast<double>(z2), gt::cast<double>(c),
                                         cfg.sinkhorn_epsilon, static_cast<int>(cfg.sinkhorn_iterations), cfg.temperature);
    sw = std::max(sw, std::abs(ssl::swav_loss(z1, z2, c, cfg).loss.item() - expected));
  }
  v.require(nt < 1e-6, fmt("nt_xent differs by %.2e", nt));
  v.require(by < 1e-6, fmt("byol differs by %.2e", by));
  v.require(sw < 1e-5, fmt("swav differs by %.2e", sw));
  return v.outcome(fmt("max |loss - oracle|: nt_xent %.1e, byol %.1e, swav %.1e over 50 batches each", nt, by, sw));
}

// ---------------------------------------------------------------------------
// 3. Sinkhorn invariants

Outcome sinkhorn_invariants() {
  Verdict v;
  Rng rng(41);
  // Standard normal scores at epsilon 0.5. The convergence rate of
  // alternating normalization falls as exp(-score range / epsilon); at the
  // training default 0.05 small matrices need more than 50 iterations.
  const double epsilon = 0.5;
  double worst_row = 0, worst_final = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = trial % 2 ? 8 : 64, k = (trial / 2) % 2 ? 4 : 32;
    TensorD scores({b, k});
    for (auto& x : scores.data()) x = rng.normal();
    std::vector<double> trace;
    const auto q = ssl::sinkhorn(scores, epsilon, 50, &trace);
    const double target = static_cast<double>(b) / static_cast<double>(k);
    for (std::size_t r = 0; r < b; ++r) {
      double row = 0;
      for (std::size_t j = 0; j < k; ++j) row += q[r * k + j];
      worst_row = std::max(worst_row, std::abs(row - 1.0));
    }
    for (std::size_t i = 1; i < trace.size(); ++i) {
      v.require(trace[i] <= trace[i - 1] + 64 * DBL_EPSILON * target,
                fmt("B=%zu K=%zu: deviation rose at iteration %zu", b, k, i + 1));
    }
    worst_final = std::max(worst_final, trace.back() / target);
    v.require(trace.back() < 1e-3 * target, fmt("B=%zu K=%zu: final deviation %.2e B/K", b, k, trace.back() / target));
  }
  v.require(worst_row < 1e-6, fmt("row sums off by %.2e", worst_row));
  return v.outcome(fmt("100 matrices, epsilon %.2g: max row error %.1e, max final column deviation %.1e B/K",
                       epsilon, worst_row, worst_final));
}

// ---------------------------------------------------------------------------
// 4. Probe oracles

Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  return z;
}

Outcome probe_oracles() {
  Verdict v;
  Rng rng(51);
  double coef = 0, exact = 0, permuted_max = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = normal_matrix(200, 5, rng);
    std::vector<double> y(200);
    for (int i = 0; i < 200; ++i) y[i] = 0.3 + z(i, 0) - 2 * z(i, 2) + 0.5 * z(i, 4) + 0.3 * rng.normal();
    Eigen::MatrixXd a(200, 6);
    a.col(0).setOnes();
    a.rightCols(5) = z;
    const Eigen::VectorXd ref = a.completeOrthogonalDecomposition().pseudoInverse() * Eigen::Map<Eigen::VectorXd>(y.data(), 200);
    const auto fit = probe::fit_ols(z, y);
    for (int j = 0; j < 6; ++j) coef = std::max(coef, std::abs(fit.coefficients[j] - ref(j)));

    std::vector<double> clean(200);
    for (int i = 0; i < 200; ++i) clean[i] = -1.2 + 0.7 * z(i, 1) + 3 * z(i, 3);
    exact = std::max(exact, std::abs(1.0 - probe::r_squared(probe::fit_ols(z, clean), z, clean)));
  }
  // Labels unrelated to the features at n = 20 d. In-sample R2 then follows
  // Beta(d/2, (n-d-1)/2) with mean d/(n-1) ~ 0.05, so a single fit clears 0.1
  // comfortably and the Monte Carlo mean sits near 0.05.
  double mean_r2 = 0;
  for (const Eigen::Index d : {5, 8, 16}) {
    const Eigen::Index n = 20 * d;
    const int draws = d == 8 ? 200 : 1;
    double total = 0;
    for (int trial = 0; trial < draws; ++trial) {
      const auto z = normal_matrix(n, d, rng);
      std::vector<double> y(n);
      for (Eigen::Index i = 0; i < n; ++i) y[i] = z(i, 0) + 0.5 * z(i, 1);
      rng.shuffle(y.begin(), y.end());
      const double r2 = probe::r_squared(probe::fit_ols(z, y), z, y);
      total += r2;
      if (trial == 0) {
        permuted_max = std::max(permuted_max, r2);
        v.require(r2 < 0.1, fmt("permuted-label R2 %.3f at n=%d, d=%d", r2, int(n), int(d)));
      }
    }
    if (draws > 1) mean_r2 = total / draws;
  }
  v.require(mean_r2 < 0.1, fmt("mean permuted-label R2 %.3f", mean_r2));
  v.require(coef < 1e-6, fmt("coefficients differ from pseudo-inverse by %.2e", coef));
  v.require(exact < 1e-9, fmt("noiseless R2 off by %.2e", exact));
  return v.outcome(fmt("pinv max diff %.1e; noiseless |1-R2| %.1e; permuted-label R2 at n=20d: max %.3f over "
                       "d=5,8,16, mean %.3f over 200 draws at d=8",
                       coef, exact, permuted_max, mean_r2));
}

// ---------------------------------------------------------------------------
// 5. Improvement arithmetic

Outcome improvement_arithmetic() {
  Verdict v;
  const double a = probe::improvement(0.68, 0.81), b = probe::improvement(0.59, 0.89);
  v.require(std::abs(a - 19) <= 1, fmt("improvement(0.68, 0.81) = %.2f", a));
  v.require(std::abs(b - 51) <= 1, fmt("improvement(0.59, 0.89) = %.2f", b));
  return v.outcome(fmt("improvement(0.68, 0.81) = %.2f%%, improvement(0.59, 0.89) = %.2f%%", a, b));
}

// ---------------------------------------------------------------------------
// 6. SSL beats the random-init baseline under linear probing

Outcome end_to_end() {
  Verdict v;
  ExperimentConfig config;
  config.dataset.env = "pitch";
  config.dataset.train = 2000;
  config.dataset.eval = 500;
  config.dataset.seed = 7;
  config.dataset.players_per_team = 2;
  config.dataset.height = config.dataset.width = 64;
  config.train.seed = 7;
  config.train.epochs = 10;
  config.train.batch_size = 64;
  config.train.encoder.embedding_dim = 64;
  // Pitch identity lives in colour (team hue, slot shade) and in which side a
  // team defends, so grayscale, strong jitter and mirroring are not
  // content-preserving here. Same values as configs/pitch_desk.json.
  config.train.augmentation.grayscale_probability = 0.0;
  config.train.augmentation.brightness_jitter = 0.2;
  config.train.augmentation.contrast_jitter = 0.2;
  config.train.augmentation.flip_probability = 0.0;
  const auto out = scratch("matrix");

  const auto result = run_matrix(config, {Method::SimCLR, Method::BYOL, Method::SwAV}, out);
  const auto& baseline = result.baseline;
  const auto& reports = result.methods;
  std::vector<std::string> timing;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double minutes = result.method_seconds[i] / 60;
    timing.push_back(fmt("%.1f min", minutes));
    v.require(minutes <= 30, fmt("%s took %.1f min", reports[i].label.c_str(), minutes));
  }
  std::string detail = fmt("baseline avg R2 %.3f", baseline.avg());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double gain = reports[i].avg() - baseline.avg();
    detail += fmt("; %s %.3f (%+.3f, %s)", reports[i].label.c_str(), reports[i].avg(), gain, timing[i].c_str());
    v.require(gain >= 0.05, fmt("%s gains only %+.3f", reports[i].label.c_str(), gain));
  }
  return v.outcome(detail);
}

// ---------------------------------------------------------------------------
// 7 and 8 use a tiny encoder so hundreds of steps stay cheap.

TrainConfig tiny_config(Method method) {
  TrainConfig c;
  c.method = method;
  c.epochs = 2;
  c.batch_size = 8;
  c.seed = 17;
  c.encoder.input_height = c.encoder.input_width = 16;
  c.encoder.stage_channels = {8, 16};
  c.encoder.blocks_per_stage = {1, 1};
  c.encoder.embedding_dim = 16;
  c.projector = {32, 8};
  c.byol.predictor_hidden_dim = 32;
  c.swav.num_prototypes = 6;
  c.swav.prototype_freeze_steps = 3;
  return c;
}

std::vector<Frame> tiny_frames(std::size_t n) {
  Rng rng(99);
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(games::render_pitch(games::sample_pitch(2, rng), games::NuisanceParams::sample(rng), 16, 16));
  }
  return out;
}

Outcome determinism_and_persistence() {
  Verdict v;
  const auto frames = tiny_frames(32);
  const auto dir = scratch("persistence");
  std::size_t steps = 0;
  for (Method m : {Method::SimCLR, Method::BYOL, Method::SwAV}) {
    const auto name = method_name(m);
    const auto c = tiny_config(m);
    auto file = [&](const std::string& what) { return dir / (name + "_" + what); };

    Trainer a(c), b(c);
    a.fit(frames);
    b.fit(frames);
    a.save(file("a.sslg"));
    b.save(file("b.sslg"));
    a.log().write_csv(file("a.csv"));
    b.log().write_csv(file("b.csv"));
    steps += a.step();
    v.require(slurp(file("a.sslg")) == slurp(file("b.sslg")), name + ": checkpoints differ between identical runs");
    v.require(slurp(file("a.csv")) == slurp(file("b.csv")), name + ": train logs differ between identical runs");

    Trainer::restore(file("a.sslg"), c).save(file("a_again.sslg"));
    v.require(slurp(file("a.sslg")) == slurp(file("a_again.sslg")), name + ": checkpoint round trip not bitwise");

    auto c1 = c;
    c1.epochs = 1;
    Trainer first(c1);
    first.fit(frames);
    first.save(file("half.sslg"));
    auto resumed = Trainer::restore(file("half.sslg"), c);
    resumed.fit(frames);
    resumed.save(file("spliced.sslg"));
    resumed.log().write_csv(file("spliced.csv"));
    v.require(slurp(file("a.sslg")) == slurp(file("spliced.sslg")), name + ": 1+restore+1 checkpoint differs from 2 epochs");
    v.require(slurp(file("a.csv")) == slurp(file("spliced.csv")), name + ": 1+restore+1 log differs from 2 epochs");
  }
  return v.outcome(fmt("simclr/byol/swav: repeat runs, round trip and 1+restore+1 splice byte-identical (%zu steps)", steps));
}

Outcome byol_contracts() {
  Verdict v;
  const auto frames = tiny_frames(64);
  auto c = tiny_config(Method::BYOL);
  c.byol.ema_tau = 0.95;
  Trainer t(c);
  const float keep = static_cast<float>(c.byol.ema_tau), take = static_cast<float>(1.0 - c.byol.ema_tau);
  auto target_params = [&] {
    auto p = t.target_encoder()->parameters("encoder");
    t.target_projector()->parameters("projector", p);
    return p;
  };
  auto online_params = [&] {
    auto p = t.encoder().parameters("encoder");
    t.projector().parameters("projector", p);
    return p;
  };
  std::size_t mismatches = 0, grad_entries = 0, checked = 0;
  double drift = 0;
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  for (int step = 0; step < 100; ++step) {
    std::vector<Tensor> before;
    for (const auto& p : target_params()) before.push_back(p.tensor.clone());
    const std::size_t start = (step * 8) % frames.size();
    t.train_step(frames, std::span<const std::size_t>(order).subspan(start, 8));
    const auto target = target_params();
    const auto online = online_params();
    for (std::size_t k = 0; k < target.size(); ++k) {
      if (target[k].name != online[k].name) {
        v.require(false, "parameter order differs: " + target[k].name + " vs " + online[k].name);
        return v.outcome("");
      }
      if (target[k].tensor.has_grad()) {
        for (float g : target[k].tensor.grad()) grad_entries += g != 0.0f;
      }
      for (std::size_t j = 0; j < before[k].size(); ++j) {
        const float expected = keep * before[k][j] + take * online[k].tensor[j];
        mismatches += target[k].tensor[j] != expected;
        drift = std::max(drift, static_cast<double>(std::abs(target[k].tensor[j] - before[k][j])));
        ++checked;
      }
    }
  }
  v.require(mismatches == 0, fmt("%zu target entries differ from the EMA recurrence", mismatches));
  v.require(grad_entries == 0, fmt("%zu nonzero target gradient entries", grad_entries));
  v.require(drift > 0, "target never moved");
  return v.outcome(fmt("100 steps, %zu target values checked: bitwise EMA recurrence, no target gradients", checked));
}

// ---------------------------------------------------------------------------
// 9. Dataset schema parity

Outcome dataset_schema() {
  Verdict v;
  const auto dir = scratch("schema");
  games::GenerateOptions o;
  o.count = 5;
  o.players_per_team = 11;
  o.out_dir = dir / "pitch22";
  const auto pitch = load_manifest(games::generate_dataset(o));
  v.require(pitch.num_variables() == 94, fmt("pitch with 22 players has %zu variables", pitch.num_variables()));
  for (const auto& e : pitch.entries) v.require(e.state.size() == 94, "pitch state vector is not 94 long");

  // Corridor: a region is valid iff some enemy box overlaps it, checked
  // against the sampled geometry directly.
  Rng rng(61);
  std::size_t masked = 0, total = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto s = games::sample_corridor(rng);
    const auto sv = games::corridor_state_vector(s);
    v.require(sv.size() == 12, "corridor state is not 12 long");
    for (int r = 0; r < 3; ++r) {
      bool overlaps = false;
      for (const auto& e : s.enemies) {
        overlaps = overlaps || (e.x + e.w / 2 > games::kRegionEdges[r] && e.x - e.w / 2 < games::kRegionEdges[r + 1]);
      }
      for (int f = 0; f < 4; ++f) {
        const auto j = static_cast<std::size_t>(4 * r + f);
        if (sv.valid[j] != overlaps) v.require(false, fmt("corridor region %d validity wrong", r));
        if (!sv.valid[j]) v.require(std::isnan(sv.values[j]), "masked corridor value is not NaN");
        masked += !sv.valid[j];
        ++total;
      }
    }
  }
  o.env = games::Env::Corridor;
  o.count = 40;
  o.out_dir = dir / "corridor";
  const auto corridor = load_manifest(games::generate_dataset(o));
  v.require(corridor.num_variables() == 12, fmt("corridor manifest has %zu variables", corridor.num_variables()));

  // Masked rows carry NaN features and NaN targets; any leak into the fit
  // would turn R2 into NaN or change it.
  const std::size_t n = 300, d = 5;
  const auto z = normal_matrix(n, d, rng);
  Manifest m;
  m.variable_names = {"v"};
  std::vector<std::size_t> keep;
  Eigen::MatrixXd poisoned = z;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = i % 3 != 0;
    const double y = z(i, 0) - 0.4 * z(i, 2) + 0.3 * rng.normal();
    m.entries.push_back({"f.png", {{ok ? y : std::nan("")}, {ok}}});
    if (ok) keep.push_back(i);
    else poisoned.row(static_cast<Eigen::Index>(i)).setConstant(std::nan(""));
  }
  const auto report = probe::probe_representations(poisoned, m);
  Eigen::MatrixXd zk(static_cast<Eigen::Index>(keep.size()), d);
  std::vector<double> yk;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    zk.row(static_cast<Eigen::Index>(k)) = z.row(static_cast<Eigen::Index>(keep[k]));
    yk.push_back(m.entries[keep[k]].state.values[0]);
  }
  const double clean = probe::r_squared(probe::fit_ols(zk, yk), zk, yk);
  v.require(std::isfinite(report.r2[0]) && report.r2[0] == clean,
            fmt("NaN-poisoned probe R2 %.6f vs clean %.6f", report.r2[0], clean));
  v.require(report.n_valid[0] == keep.size(), "n_valid counts masked rows");
  return v.outcome(fmt("pitch 22 players -> 94 variables; corridor 12 variables, %zu/%zu masked entries match geometry; "
                       "NaN-poisoned rows excluded (R2 %.4f both ways)",
                       masked, total, clean));
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  log::set_verbose(false);
  const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_correctness},
      {2, "loss oracles", loss_oracles},
      {3, "sinkhorn invariants", sinkhorn_invariants},
      {4, "probe oracles", probe_oracles},
      {5, "improvement arithmetic", improvement_arithmetic},
      {6, "ssl beats random-init baseline", end_to_end},
      {7, "determinism and persistence", determinism_and_persistence},
      {8, "byol target contracts", byol_contracts},
      {9, "dataset schema parity", dataset_schema},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
