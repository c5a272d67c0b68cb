#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gamessl/random.hpp"
#include "gamessl/tensor.hpp"

namespace gamessl::ssl {

struct ProjectionHeadConfig {
  std::size_t hidden_dim = 128;
  std::size_t output_dim = 32;
  void validate() const;
};

struct SimCLRConfig {
  double temperature = 0.2;
  void validate() const;
};

struct BYOLConfig {
  double ema_tau = 0.99;
  std::size_t predictor_hidden_dim = 128;
  void validate() const;
};

struct SwAVConfig {
  std::size_t num_prototypes = 32;
  double sinkhorn_epsilon = 0.05;
  std::size_t sinkhorn_iterations = 3;
  double temperature = 0.1;
  // Prototypes receive no update during the first steps of training.
  std::size_t prototype_freeze_steps = 100;
  void validate() const;
};

// NT-Xent over 2N embeddings where row i and row i+N are the two views of one
// image. Rows are l2-normalized internally; self-similarity is excluded from
// each anchor's denominator. Returns the mean over all 2N anchors. With N = 1
// the positive is the only candidate and the loss is exactly 0.
template <class T>
BasicTensor<T> nt_xent_loss(const BasicTensor<T>& embeddings, double temperature, BasicTape<T>* tape = nullptr);

// mean_i || p_i/|p_i| - z_i/|z_i| ||^2 = mean_i (2 - 2 cos(p_i, z_i)).
// The target is detached, so no gradient ever reaches it.
template <class T>
BasicTensor<T> byol_loss(const BasicTensor<T>& online_pred, const BasicTensor<T>& target_proj,
                         BasicTape<T>* tape = nullptr);

// target <- tau * target + (1 - tau) * online, elementwise in float with
// tau and (1 - tau) each rounded to float once. Names and shapes must match
// pairwise.
void ema_update(std::span<const NamedTensor> target, std::span<const NamedTensor> online, double tau);

// Sinkhorn-Knopp equipartition of B x K scores, in double precision.
//
// Q starts as exp(scores / epsilon) normalized to total mass 1. Each
// iteration rescales columns to mass 1/K each, then rows to mass 1/B each.
// The result is multiplied by B, so every row sums to 1 and column sums
// approach B/K. If `column_deviation` is given it receives
// max_k |column_sum_k - B/K| after each iteration.
TensorD sinkhorn(const TensorD& scores, double epsilon, std::size_t iterations,
                 std::vector<double>* column_deviation = nullptr);
Tensor sinkhorn(const Tensor& scores, double epsilon, std::size_t iterations);

// Swapped prediction with fixed codes:
//   -( sum q2 * log_softmax(s1 / T) + sum q1 * log_softmax(s2 / T) ) / (2B)
// Codes are treated as constants (their gradient is never touched).
template <class T>
BasicTensor<T> swapped_prediction_loss(const BasicTensor<T>& scores1, const BasicTensor<T>& scores2,
                                       const BasicTensor<T>& codes1, const BasicTensor<T>& codes2, double temperature,
                                       BasicTape<T>* tape = nullptr);

template <class T>
struct SwAVOutput {
  BasicTensor<T> loss;
  BasicTensor<T> codes1;
  BasicTensor<T> codes2;
};

// z1, z2: [B,p] projections (l2-normalized here); prototypes: [p,K] with unit
// columns. Codes come from Sinkhorn on the detached scores. Warns when B < 2.
template <class T>
SwAVOutput<T> swav_loss(const BasicTensor<T>& z1, const BasicTensor<T>& z2, const BasicTensor<T>& prototypes,
                        const SwAVConfig& config, BasicTape<T>* tape = nullptr);

// Scales every column of a [p,K] matrix to unit norm in place. A zero column
// is replaced by a random direction from `rng` and logged. Returns the number
// of replaced columns.
std::size_t prototype_renormalize(Tensor& prototypes, Rng& rng);

}  // namespace gamessl::ssl
