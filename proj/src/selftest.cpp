#include "gamessl/selftest.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gamessl/error.hpp"
#include "gamessl/ops.hpp"
#include "gamessl/probe.hpp"
#include "gamessl/random.hpp"
#include "gamessl/ssl.hpp"

namespace gamessl::selftest {

namespace {

using LossFn = std::function<TensorD(std::vector<TensorD>&, TapeD*)>;

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TensorD random(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Central differences in double precision, relative error with a 1e-3 floor.
double gradient_error(const LossFn& loss, std::vector<TensorD> inputs, Rng& rng) {
  for (auto& x : inputs) {
    x.set_requires_grad();
    x.clear_grad();
  }
  TapeD tape;
  auto l = loss(inputs, &tape);
  backward(tape, l);
  double worst = 0;
  const double h = 1e-6;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.size(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    for (std::size_t k = 0; k < std::min<std::size_t>(20, x.size()); ++k) {
      const std::size_t i = x.size() <= 20 ? k : rng.below(x.size());
      const double saved = x[i];
      x[i] = saved + h;
      const double plus = loss(inputs, nullptr).item();
      x[i] = saved - h;
      const double minus = loss(inputs, nullptr).item();
      x[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                  std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3}));
    }
  }
  return worst;
}

// Weighted sum so every output element matters differently.
TensorD project(const TensorD& y, TapeD* tape) {
  TensorD w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return ops::sum(ops::mul(y, w, tape), tape);
}

struct GradCase {
  std::string name;
  LossFn loss;
  std::vector<TensorD> inputs;
};

std::vector<GradCase> grad_cases(Rng& rng) {
  std::vector<GradCase> c;
  c.push_back({"matmul", [](auto& in, auto* t) { return project(ops::matmul(in[0], in[1], t), t); },
               {random({3, 4}, rng), random({4, 5}, rng)}});
  c.push_back({"transpose", [](auto& in, auto* t) { return project(ops::transpose(in[0], t), t); },
               {random({3, 4}, rng)}});
  c.push_back({"linear", [](auto& in, auto* t) { return project(ops::linear(in[0], in[1], in[2], t), t); },
               {random({4, 3}, rng), random({5, 3}, rng), random({5}, rng)}});
  c.push_back({"add/sub/mul", [](auto& in, auto* t) {
                 return project(ops::mul(ops::add(in[0], in[1], t), ops::sub(in[0], in[1], t), t), t);
               },
               {random({2, 5}, rng), random({2, 5}, rng)}});
  c.push_back({"scale/add_scalar",
               [](auto& in, auto* t) { return project(ops::add_scalar(ops::scale(in[0], 1.7, t), -0.4, t), t); },
               {random({6}, rng)}});
  c.push_back({"relu", [](auto& in, auto* t) { return project(ops::relu(in[0], t), t); }, {random({4, 6}, rng)}});
  c.push_back({"conv2d", [](auto& in, auto* t) { return project(ops::conv2d(in[0], in[1], 2, 1, t), t); },
               {random({2, 3, 6, 6}, rng), random({4, 3, 3, 3}, rng)}});
  c.push_back({"batch_norm",
               [](auto& in, auto* t) {
                 TensorD rm = TensorD::zeros({3}), rv = TensorD::ones({3});
                 return project(ops::batch_norm(in[0], in[1], in[2], rm, rv, {}, t), t);
               },
               {random({4, 3, 2, 2}, rng), random({3}, rng, 0.5, 1.5), random({3}, rng)}});
  c.push_back({"global_avg_pool", [](auto& in, auto* t) { return project(ops::global_avg_pool(in[0], t), t); },
               {random({2, 3, 4, 4}, rng)}});
  c.push_back({"l2_normalize", [](auto& in, auto* t) { return project(ops::l2_normalize(in[0], 1e-12, t), t); },
               {random({3, 5}, rng)}});
  c.push_back({"log_softmax", [](auto& in, auto* t) { return project(ops::log_softmax(in[0], t), t); },
               {random({3, 5}, rng, -2, 2)}});
  c.push_back({"fill_diagonal/pick",
               [](auto& in, auto* t) {
                 return ops::sum(ops::pick(ops::fill_diagonal(in[0], -3.0, t), {1, 2, 0, 1}, t), t);
               },
               {random({4, 4}, rng)}});
  c.push_back({"slice/concat/row_sum",
               [](auto& in, auto* t) {
                 auto a = ops::slice_rows(in[0], 1, 3, t);
                 return project(ops::row_sum(ops::concat_rows(a, in[0], t), t), t);
               },
               {random({4, 3}, rng)}});
  c.push_back({"mean", [](auto& in, auto* t) { return ops::mean(ops::mul(in[0], in[0], t), t); },
               {random({3, 3}, rng)}});
  return c;
}

// Plain-loop references for the loss functions.
double nt_xent_reference(const TensorD& e, double tau) {
  const std::size_t rows = e.dim(0), d = e.dim(1), n = rows / 2;
  std::vector<double> z(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += e[i * d + k] * e[i * d + k];
    for (std::size_t k = 0; k < d; ++k) z[i * d + k] = e[i * d + k] / std::sqrt(s);
  }
  auto sim = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += z[a * d + k] * z[b * d + k];
    return s / tau;
  };
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < rows; ++j)
      if (j != i) denom += std::exp(sim(i, j));
    total += -(sim(i, (i + n) % rows) - std::log(denom));
  }
  return total / static_cast<double>(rows);
}

double byol_reference(const TensorD& p, const TensorD& z) {
  const std::size_t n = p.dim(0), d = p.dim(1);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pp = 0, zz = 0, pz = 0;
    for (std::size_t k = 0; k < d; ++k) {
      pp += p[i * d + k] * p[i * d + k];
      zz += z[i * d + k] * z[i * d + k];
      pz += p[i * d + k] * z[i * d + k];
    }
    total += 2 - 2 * pz / std::sqrt(pp * zz);
  }
  return total / static_cast<double>(n);
}

std::vector<double> sinkhorn_reference(const std::vector<double>& s, std::size_t b, std::size_t k, double eps,
                                       std::size_t iters) {
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  std::vector<double> q(b * k);
  double total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) total += q[i] = std::exp((s[i] - mx) / eps);
  for (auto& v : q) v /= total;
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t c = 0; c < k; ++c) {
      double col = 0;
      for (std::size_t r = 0; r < b; ++r) col += q[r * k + c];
      for (std::size_t r = 0; r < b; ++r) q[r * k + c] /= col * static_cast<double>(k);
    }
    for (std::size_t r = 0; r < b; ++r) {
      double row = 0;
      for (std::size_t c = 0; c < k; ++c) row += q[r * k + c];
      for (std::size_t c = 0; c < k; ++c) q[r * k + c] /= row * static_cast<double>(b);
    }
  }
  for (auto& v : q) v *= static_cast<double>(b);
  return q;
}

double swav_reference(const TensorD& z1, const TensorD& z2, const TensorD& protos, const ssl::SwAVConfig& cfg) {
  const std::size_t b = z1.dim(0), p = z1.dim(1), k = protos.dim(1);
  auto scores = [&](const TensorD& z) {
    std::vector<double> s(b * k, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      double n = 0;
      for (std::size_t d = 0; d < p; ++d) n += z[i * p + d] * z[i * p + d];
      n = std::sqrt(n);
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < p; ++d) s[i * k + c] += z[i * p + d] / n * protos[d * k + c];
    }
    return s;
  };
  const auto s1 = scores(z1), s2 = scores(z2);
  const auto q1 = sinkhorn_reference(s1, b, k, cfg.sinkhorn_epsilon, cfg.sinkhorn_iterations);
  const auto q2 = sinkhorn_reference(s2, b, k, cfg.sinkhorn_epsilon, cfg.sinkhorn_iterations);
  auto ce = [&](const std::vector<double>& q, const std::vector<double>& s) {
    double total = 0;
    for (std::size_t i = 0; i < b; ++i) {
      double mx = -1e300, denom = 0;
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, s[i * k + c] / cfg.temperature);
      for (std::size_t c = 0; c < k; ++c) denom += std::exp(s[i * k + c] / cfg.temperature - mx);
      for (std::size_t c = 0; c < k; ++c) total -= q[i * k + c] * (s[i * k + c] / cfg.temperature - mx - std::log(denom));
    }
    return total;
  };
  return (ce(q2, s1) + ce(q1, s2)) / (2.0 * static_cast<double>(b));
}

}  // namespace

std::vector<Check> run(const Options& options) {
  if (!options.inject_fault.empty() && options.inject_fault != "nt_xent") {
    throw ConfigError("unknown fault '" + options.inject_fault + "' (known: nt_xent)");
  }
  std::vector<Check> checks;
  auto add = [&](std::string name, bool ok, std::string detail) {
    checks.push_back({std::move(name), ok, std::move(detail)});
  };
  Rng rng(20240601);

  for (auto& c : grad_cases(rng)) {
    const double err = gradient_error(c.loss, c.inputs, rng);
    add("gradcheck " + c.name, err < 1e-5, fmt("max relative error %.2e", err));
  }

  {
    const double sign = options.inject_fault == "nt_xent" ? -1.0 : 1.0;
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 1 + rng.below(8);
      const auto e = random({2 * n, 6}, rng);
      const double got = sign * ssl::nt_xent_loss(e, 0.2).item();
      worst = std::max(worst, std::abs(got - nt_xent_reference(e, 0.2)));
    }
    add("nt_xent oracle", worst < 1e-6, fmt("max abs difference %.2e", worst));
  }
  {
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      const auto p = random({5, 4}, rng), z = random({5, 4}, rng);
      worst = std::max(worst, std::abs(ssl::byol_loss(p, z).item() - byol_reference(p, z)));
    }
    add("byol oracle", worst < 1e-6, fmt("max abs difference %.2e", worst));
  }
  {
    ssl::SwAVConfig cfg;
    cfg.num_prototypes = 6;
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      const auto z1 = random({8, 4}, rng), z2 = random({8, 4}, rng);
      auto protos = random({4, 6}, rng);
      // Unit columns.
      for (std::size_t c = 0; c < 6; ++c) {
        double n = 0;
        for (std::size_t r = 0; r < 4; ++r) n += protos[r * 6 + c] * protos[r * 6 + c];
        for (std::size_t r = 0; r < 4; ++r) protos[r * 6 + c] /= std::sqrt(n);
      }
      const double got = ssl::swav_loss(z1, z2, protos, cfg).loss.item();
      worst = std::max(worst, std::abs(got - swav_reference(z1, z2, protos, cfg)));
    }
    add("swav oracle", worst < 1e-5, fmt("max abs difference %.2e", worst));
  }
  {
    bool ok = true;
    double worst_row = 0, worst_final = 0;
    for (int t = 0; t < 40; ++t) {
      const std::size_t b = t % 2 ? 64 : 8, k = (t / 2) % 2 ? 32 : 4;
      TensorD s({b, k});
      for (auto& v : s.data()) v = rng.normal();
      std::vector<double> trace;
      const auto q = ssl::sinkhorn(s, 0.5, 50, &trace);
      for (std::size_t r = 0; r < b; ++r) {
        double row = 0;
        for (std::size_t c = 0; c < k; ++c) row += q[r * k + c];
        worst_row = std::max(worst_row, std::abs(row - 1));
      }
      const double target = static_cast<double>(b) / static_cast<double>(k);
      for (std::size_t i = 1; i < trace.size(); ++i) {
        if (trace[i] > trace[i - 1] + 64 * 2.2e-16 * target) ok = false;
      }
      worst_final = std::max(worst_final, trace.back() / target);
    }
    ok = ok && worst_row < 1e-6 && worst_final < 1e-3;
    add("sinkhorn invariants", ok,
        fmt("max row error %.2e", worst_row) + ", " + fmt("final relative column deviation %.2e", worst_final));
  }
  {
    Eigen::MatrixXd z(200, 5);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    std::vector<double> v(200);
    for (int i = 0; i < 200; ++i) v[i] = 0.5 + z(i, 0) - 2 * z(i, 3) + 0.1 * rng.normal();
    Eigen::MatrixXd a(200, 6);
    a.col(0).setOnes();
    a.rightCols(5) = z;
    const Eigen::VectorXd oracle =
        a.completeOrthogonalDecomposition().pseudoInverse() * Eigen::Map<const Eigen::VectorXd>(v.data(), 200);
    const auto fit = probe::fit_ols(z, v);
    double worst = 0;
    for (int j = 0; j < 6; ++j) worst = std::max(worst, std::abs(fit.coefficients[j] - oracle[j]));
    add("ols pseudo-inverse oracle", worst < 1e-6, fmt("max coefficient difference %.2e", worst));

    for (int i = 0; i < 200; ++i) v[i] = 3 + 2 * z(i, 1);
    const double r2 = probe::r_squared(probe::fit_ols(z, v), z, v);
    add("r2 on exact linear data", std::abs(r2 - 1) < 1e-9, fmt("R2 = %.12f", r2));
  }
  {
    const double a = probe::improvement(0.68, 0.81), b = probe::improvement(0.59, 0.89);
    add("improvement arithmetic", std::abs(a - 19) <= 1 && std::abs(b - 51) <= 1,
        fmt("%.2f%%", a) + " and " + fmt("%.2f%%", b));
  }
  return checks;
}

}  // namespace gamessl::selftest
