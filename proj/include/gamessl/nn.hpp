#pragma once

#include <string>
#include <vector>

#include "gamessl/ops.hpp"
#include "gamessl/random.hpp"
#include "gamessl/tensor.hpp"

// Small trainable layers built on the ops. Members are tensor handles, so
// copying a layer aliases its parameters; clone() makes an independent copy.
namespace gamessl::nn {

using ops::Mode;

// He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

struct Conv2d {
  Tensor weight;  // [out, in, k, k]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2d create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
                       Rng& rng);
  Tensor forward(const Tensor& x, Tape* tape) const { return ops::conv2d(x, weight, stride, padding, tape); }
  void parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  Conv2d clone() const;
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  ops::BatchNormOptions options;

  static BatchNorm create(std::size_t channels);
  Tensor forward(const Tensor& x, Mode mode, Tape* tape);
  void parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  BatchNorm clone() const;
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static Linear create(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x, Tape* tape) const { return ops::linear(x, weight, bias, tape); }
  void parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  Linear clone() const;
};

// Linear -> BatchNorm -> ReLU -> Linear.
struct Mlp {
  Linear hidden;
  BatchNorm norm;
  Linear output;

  static Mlp create(std::size_t in, std::size_t hidden_dim, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode, Tape* tape);
  void parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  Mlp clone() const;
};

std::size_t count_elements(const std::vector<NamedTensor>& tensors);

}  // namespace gamessl::nn
