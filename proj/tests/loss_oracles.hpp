#pragma once

// Brute-force reference implementations of the SSL losses, written with plain
// loops in double precision and sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gamessl/tensor.hpp"

namespace gamessl::testing::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix rows(const TensorD& t) {
  const std::size_t n = t.dim(0), p = t.dim(1);
  Matrix m(n, std::vector<double>(p));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) m[i][j] = t[i * p + j];
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

inline double nt_xent(const TensorD& z, double tau) {
  const auto m = rows(z);
  const std::size_t two_n = m.size(), n = two_n / 2;
  double total = 0;
  for (std::size_t a = 0; a < two_n; ++a) {
    const std::size_t pos = a < n ? a + n : a - n;
    double den = 0;
    for (std::size_t b = 0; b < two_n; ++b) {
      if (b != a) den += std::exp(cosine(m[a], m[b]) / tau);
    }
    total += -std::log(std::exp(cosine(m[a], m[pos]) / tau) / den);
  }
  return total / static_cast<double>(two_n);
}

inline double byol(const TensorD& p, const TensorD& z) {
  const auto a = rows(p), b = rows(z);
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += 2.0 - 2.0 * cosine(a[i], b[i]);
  return total / static_cast<double>(a.size());
}

// Plain alternating normalization: columns to B/K, rows to 1.
inline Matrix sinkhorn(const Matrix& s, double eps, int iterations) {
  const std::size_t b = s.size(), k = s[0].size();
  double mx = -1e300;
  for (const auto& r : s) mx = std::max(mx, *std::max_element(r.begin(), r.end()));
  Matrix q(b, std::vector<double>(k));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j) q[i][j] = std::exp((s[i][j] - mx) / eps);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      double c = 0;
      for (std::size_t i = 0; i < b; ++i) c += q[i][j];
      for (std::size_t i = 0; i < b; ++i) q[i][j] *= (static_cast<double>(b) / static_cast<double>(k)) / c;
    }
    for (std::size_t i = 0; i < b; ++i) {
      double r = 0;
      for (std::size_t j = 0; j < k; ++j) r += q[i][j];
      for (std::size_t j = 0; j < k; ++j) q[i][j] /= r;
    }
  }
  return q;
}

inline std::vector<double> sinkhorn_converged(const TensorD& s, double eps) {
  const auto q = sinkhorn(rows(s), eps, 10000);
  std::vector<double> flat;
  for (const auto& r : q) flat.insert(flat.end(), r.begin(), r.end());
  return flat;
}

inline double swapped_prediction(const TensorD& s1, const TensorD& s2, const TensorD& q1, const TensorD& q2,
                                 double temperature) {
  const auto a = rows(s1), b = rows(s2), qa = rows(q1), qb = rows(q2);
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double za = 0, zb = 0;
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      za += std::exp(a[i][j] / temperature);
      zb += std::exp(b[i][j] / temperature);
    }
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      total += qb[i][j] * (a[i][j] / temperature - std::log(za));
      total += qa[i][j] * (b[i][j] / temperature - std::log(zb));
    }
  }
  return -total / (2.0 * static_cast<double>(a.size()));
}

inline double swav(const TensorD& z1, const TensorD& z2, const TensorD& prototypes, double eps, int iterations,
                   double temperature) {
  const auto a = rows(z1), b = rows(z2), c = rows(prototypes);
  const std::size_t n = a.size(), p = c.size(), k = c[0].size();
  Matrix s1(n, std::vector<double>(k)), s2(n, std::vector<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const double na = std::sqrt(dot(a[i], a[i])), nb = std::sqrt(dot(b[i], b[i]));
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t r = 0; r < p; ++r) {
        s1[i][j] += a[i][r] / na * c[r][j];
        s2[i][j] += b[i][r] / nb * c[r][j];
      }
    }
  }
  const auto q1 = sinkhorn(s1, eps, iterations), q2 = sinkhorn(s2, eps, iterations);
  auto to_tensor = [&](const Matrix& m) {
    TensorD t({n, k});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) t[i * k + j] = m[i][j];
    return t;
  };
  return swapped_prediction(to_tensor(s1), to_tensor(s2), to_tensor(q1), to_tensor(q2), temperature);
}

}  // namespace gamessl::testing::oracle
