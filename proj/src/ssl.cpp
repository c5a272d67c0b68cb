#include "gamessl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gamessl/error.hpp"
#include "gamessl/log.hpp"
#include "gamessl/ops.hpp"

namespace gamessl::ssl {

void ProjectionHeadConfig::validate() const {
  if (hidden_dim == 0) throw ConfigError("projection hidden_dim must be positive");
  if (output_dim < 4) throw ConfigError("projection output_dim must be >= 4, got " + std::to_string(output_dim));
}

void SimCLRConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("simclr temperature must be > 0");
}

void BYOLConfig::validate() const {
  if (!(ema_tau >= 0.0 && ema_tau <= 1.0)) throw ConfigError("byol ema_tau must be in [0, 1]");
  if (predictor_hidden_dim == 0) throw ConfigError("byol predictor_hidden_dim must be positive");
}

void SwAVConfig::validate() const {
  if (num_prototypes < 2) throw ConfigError("swav num_prototypes must be >= 2");
  if (!(sinkhorn_epsilon > 0.0)) throw ConfigError("swav sinkhorn_epsilon must be > 0");
  if (sinkhorn_iterations == 0) throw ConfigError("swav sinkhorn_iterations must be positive");
  if (!(temperature > 0.0)) throw ConfigError("swav temperature must be > 0");
}

template <class T>
BasicTensor<T> nt_xent_loss(const BasicTensor<T>& embeddings, double temperature, BasicTape<T>* tape) {
  if (embeddings.rank() != 2 || embeddings.dim(0) < 2 || embeddings.dim(0) % 2 != 0) {
    throw DimensionError("nt_xent_loss: expected [2N,p] embeddings with N >= 1, got " + to_string(embeddings.shape()));
  }
  if (!(temperature > 0.0)) throw ContractError("nt_xent_loss: temperature must be > 0");
  const std::size_t two_n = embeddings.dim(0), n = two_n / 2;
  auto z = ops::l2_normalize(embeddings, T(1e-12), tape);
  auto sim = ops::matmul(z, ops::transpose(z, tape), tape);
  sim = ops::scale(sim, static_cast<T>(1.0 / temperature), tape);
  // exp(-1e9 - max) underflows to exactly 0, removing self-pairs.
  sim = ops::fill_diagonal(sim, T(-1e9), tape);
  auto logp = ops::log_softmax(sim, tape);
  std::vector<std::size_t> positive(two_n);
  for (std::size_t i = 0; i < two_n; ++i) positive[i] = i < n ? i + n : i - n;
  return ops::scale(ops::mean(ops::pick(logp, positive, tape), tape), T(-1), tape);
}

template <class T>
BasicTensor<T> byol_loss(const BasicTensor<T>& online_pred, const BasicTensor<T>& target_proj, BasicTape<T>* tape) {
  if (online_pred.rank() != 2 || online_pred.shape() != target_proj.shape()) {
    throw DimensionError("byol_loss: prediction " + to_string(online_pred.shape()) + " vs target " +
                         to_string(target_proj.shape()));
  }
  auto p = ops::l2_normalize(online_pred, T(1e-12), tape);
  auto z = ops::l2_normalize(target_proj.detach(), T(1e-12));
  auto diff = ops::sub(p, z, tape);
  auto total = ops::sum(ops::mul(diff, diff, tape), tape);
  return ops::scale(total, static_cast<T>(1.0 / static_cast<double>(online_pred.dim(0))), tape);
}

void ema_update(std::span<const NamedTensor> target, std::span<const NamedTensor> online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("ema_update: tau must be in [0, 1]");
  if (target.size() != online.size()) {
    throw DimensionError("ema_update: " + std::to_string(target.size()) + " target tensors vs " +
                         std::to_string(online.size()) + " online tensors");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].tensor.shape() != online[i].tensor.shape()) {
      throw DimensionError("ema_update: shape mismatch for " + target[i].name + ": " +
                           to_string(target[i].tensor.shape()) + " vs " + to_string(online[i].tensor.shape()));
    }
  }
  const auto keep = static_cast<float>(tau);
  const auto take = static_cast<float>(1.0 - tau);
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target[i].tensor;
    auto o = online[i].tensor.data();
    auto td = t.data();
    for (std::size_t j = 0; j < td.size(); ++j) td[j] = keep * td[j] + take * o[j];
  }
}

namespace {

// Column sums of B * exp(logq), compared against B/K.
double column_deviation(const std::vector<double>& logq, std::size_t b, std::size_t k) {
  double worst = 0.0;
  const double target = static_cast<double>(b) / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < b; ++r) s += std::exp(logq[r * k + c]);
    worst = std::max(worst, std::abs(s * static_cast<double>(b) - target));
  }
  return worst;
}

template <class Get>
double logsumexp(std::size_t n, Get get) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, get(i));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(get(i) - mx);
  return mx + std::log(s);
}

}  // namespace

// The normalizations run in the log domain, which is the same iteration as
// rescaling exp(scores / epsilon) but cannot underflow a whole row or column
// to zero when epsilon is small relative to the score range.
TensorD sinkhorn(const TensorD& scores, double epsilon, std::size_t iterations, std::vector<double>* trace) {
  if (scores.rank() != 2) throw DimensionError("sinkhorn: expected [B,K] scores, got " + to_string(scores.shape()));
  const std::size_t b = scores.dim(0), k = scores.dim(1);
  if (k < 2) throw DimensionError("sinkhorn: need K >= 2 prototypes");
  if (!(epsilon > 0.0)) throw ContractError("sinkhorn: epsilon must be > 0");
  for (double s : scores.data()) {
    if (!std::isfinite(s)) throw NumericalError("sinkhorn: non-finite score");
  }
  std::vector<double> lq(b * k);
  for (std::size_t i = 0; i < lq.size(); ++i) lq[i] = scores[i] / epsilon;
  const double total = logsumexp(lq.size(), [&](std::size_t i) { return lq[i]; });
  for (auto& v : lq) v -= total;
  if (trace) trace->clear();
  const double log_k = std::log(static_cast<double>(k)), log_b = std::log(static_cast<double>(b));
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t c = 0; c < k; ++c) {
      const double lse = logsumexp(b, [&](std::size_t r) { return lq[r * k + c]; }) + log_k;
      for (std::size_t r = 0; r < b; ++r) lq[r * k + c] -= lse;
    }
    for (std::size_t r = 0; r < b; ++r) {
      const double lse = logsumexp(k, [&](std::size_t c) { return lq[r * k + c]; }) + log_b;
      for (std::size_t c = 0; c < k; ++c) lq[r * k + c] -= lse;
    }
    if (trace) trace->push_back(column_deviation(lq, b, k));
  }
  TensorD out({b, k});
  for (std::size_t i = 0; i < lq.size(); ++i) out[i] = std::exp(lq[i]) * static_cast<double>(b);
  return out;
}

Tensor sinkhorn(const Tensor& scores, double epsilon, std::size_t iterations) {
  TensorD s(scores.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = scores[i];
  const auto q = sinkhorn(s, epsilon, iterations);
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(q[i]);
  return out;
}

namespace {

template <class T>
BasicTensor<T> sinkhorn_t(const BasicTensor<T>& scores, double epsilon, std::size_t iterations) {
  return sinkhorn(scores.detach(), epsilon, iterations);
}

}  // namespace

template <class T>
BasicTensor<T> swapped_prediction_loss(const BasicTensor<T>& scores1, const BasicTensor<T>& scores2,
                                       const BasicTensor<T>& codes1, const BasicTensor<T>& codes2, double temperature,
                                       BasicTape<T>* tape) {
  if (scores1.rank() != 2 || scores1.shape() != scores2.shape() || codes1.shape() != scores1.shape() ||
      codes2.shape() != scores1.shape()) {
    throw DimensionError("swapped_prediction_loss: scores and codes must share one [B,K] shape");
  }
  if (!(temperature > 0.0)) throw ContractError("swapped_prediction_loss: temperature must be > 0");
  const auto inv_t = static_cast<T>(1.0 / temperature);
  const auto q1 = codes1.detach(), q2 = codes2.detach();
  auto l1 = ops::log_softmax(ops::scale(scores1, inv_t, tape), tape);
  auto l2 = ops::log_softmax(ops::scale(scores2, inv_t, tape), tape);
  auto total = ops::add(ops::sum(ops::mul(l1, q2, tape), tape), ops::sum(ops::mul(l2, q1, tape), tape), tape);
  return ops::scale(total, static_cast<T>(-1.0 / (2.0 * static_cast<double>(scores1.dim(0)))), tape);
}

template <class T>
SwAVOutput<T> swav_loss(const BasicTensor<T>& z1, const BasicTensor<T>& z2, const BasicTensor<T>& prototypes,
                        const SwAVConfig& config, BasicTape<T>* tape) {
  if (z1.rank() != 2 || z1.shape() != z2.shape() || prototypes.rank() != 2 || prototypes.dim(0) != z1.dim(1)) {
    throw DimensionError("swav_loss: projections " + to_string(z1.shape()) + ", " + to_string(z2.shape()) +
                         " and prototypes " + to_string(prototypes.shape()) + " do not align");
  }
  if (z1.dim(0) < 2) log::warn("swav_loss: batch of " + std::to_string(z1.dim(0)) + " makes equipartition meaningless");
  auto s1 = ops::matmul(ops::l2_normalize(z1, T(1e-12), tape), prototypes, tape);
  auto s2 = ops::matmul(ops::l2_normalize(z2, T(1e-12), tape), prototypes, tape);
  auto q1 = sinkhorn_t(s1, config.sinkhorn_epsilon, config.sinkhorn_iterations);
  auto q2 = sinkhorn_t(s2, config.sinkhorn_epsilon, config.sinkhorn_iterations);
  auto loss = swapped_prediction_loss(s1, s2, q1, q2, config.temperature, tape);
  return {loss, q1, q2};
}

std::size_t prototype_renormalize(Tensor& prototypes, Rng& rng) {
  if (prototypes.rank() != 2) throw DimensionError("prototype_renormalize: expected [p,K]");
  const std::size_t p = prototypes.dim(0), k = prototypes.dim(1);
  std::size_t replaced = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double norm2 = 0.0;
    for (std::size_t r = 0; r < p; ++r) norm2 += static_cast<double>(prototypes[r * k + c]) * prototypes[r * k + c];
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
      log::warn("prototype column " + std::to_string(c) + " has zero norm; re-initializing from a random direction");
      norm2 = 0.0;
      while (norm2 == 0.0) {
        for (std::size_t r = 0; r < p; ++r) {
          prototypes[r * k + c] = static_cast<float>(rng.normal());
          norm2 += static_cast<double>(prototypes[r * k + c]) * prototypes[r * k + c];
        }
      }
      ++replaced;
    }
    const double norm = std::sqrt(norm2);
    for (std::size_t r = 0; r < p; ++r) {
      prototypes[r * k + c] = static_cast<float>(static_cast<double>(prototypes[r * k + c]) / norm);
    }
  }
  return replaced;
}

#define GAMESSL_INSTANTIATE(T)                                                                                     \
  template BasicTensor<T> nt_xent_loss(const BasicTensor<T>&, double, BasicTape<T>*);                             \
  template BasicTensor<T> byol_loss(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);                 \
  template BasicTensor<T> swapped_prediction_loss(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                                  const BasicTensor<T>&, const BasicTensor<T>&, double,           \
                                                  BasicTape<T>*);                                                 \
  template SwAVOutput<T> swav_loss(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,           \
                                   const SwAVConfig&, BasicTape<T>*);

GAMESSL_INSTANTIATE(float)
GAMESSL_INSTANTIATE(double)

}  // namespace gamessl::ssl
