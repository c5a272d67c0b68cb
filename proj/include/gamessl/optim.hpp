#pragma once

#include <span>
#include <vector>

#include "gamessl/tensor.hpp"

namespace gamessl {

struct OptimizerState {
  float learning_rate = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  // One buffer per parameter, created on the first step.
  std::vector<Tensor> velocity;

  void validate() const;
};

// SGD with momentum and L2 weight decay, applied to each parameter's grad slot:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - learning_rate * v
// A parameter without an allocated grad is treated as having zero gradient.
// Throws NumericalError naming the parameter if any gradient is not finite;
// in that case no parameter is modified.
void sgd_step(std::span<const NamedTensor> params, OptimizerState& state);

void zero_grad(std::span<const NamedTensor> params);

}  // namespace gamessl
