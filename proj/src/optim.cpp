#include "gamessl/optim.hpp"

#include <cmath>

#include "gamessl/error.hpp"

namespace gamessl {

void OptimizerState::validate() const {
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
}

void sgd_step(std::span<const NamedTensor> params, OptimizerState& state) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.push_back(Tensor::zeros(p.tensor.shape()));
  }
  if (state.velocity.size() != params.size()) {
    throw DimensionError("optimizer has " + std::to_string(state.velocity.size()) + " velocity buffers for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].tensor;
    if (state.velocity[i].shape() != p.shape()) {
      throw DimensionError("velocity buffer for '" + params[i].name + "' has shape " +
                           to_string(state.velocity[i].shape()) + ", parameter has " + to_string(p.shape()));
    }
    for (std::size_t j = 0; j < p.grad().size(); ++j) {
      if (!std::isfinite(p.grad()[j])) {
        throw NumericalError("non-finite gradient in parameter '" + params[i].name + "' at element " +
                             std::to_string(j));
      }
    }
  }

  const float lr = state.learning_rate, mu = state.momentum, wd = state.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto v = state.velocity[i].data();
    auto w = p.data();
    auto g = p.grad();
    const bool has_grad = !g.empty();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float grad = has_grad ? g[j] : 0.0f;
      v[j] = mu * v[j] + grad + wd * w[j];
      w[j] -= lr * v[j];
    }
  }
}

void zero_grad(std::span<const NamedTensor> params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace gamessl
