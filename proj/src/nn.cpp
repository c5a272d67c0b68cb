#include "gamessl/nn.hpp"

#include <cmath>

namespace gamessl::nn {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  t.set_requires_grad();
  return t;
}

Conv2d Conv2d::create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
                      Rng& rng) {
  return {he_uniform({out, in, kernel, kernel}, in * kernel * kernel, rng), stride, padding};
}

void Conv2d::parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "/weight", weight});
}

Conv2d Conv2d::clone() const { return {weight.clone(), stride, padding}; }

BatchNorm BatchNorm::create(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor::ones({channels});
  bn.gamma.set_requires_grad();
  bn.beta = Tensor::zeros({channels});
  bn.beta.set_requires_grad();
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::ones({channels});
  return bn;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode, Tape* tape) {
  auto opts = options;
  opts.mode = mode;
  return ops::batch_norm(x, gamma, beta, running_mean, running_var, opts, tape);
}

void BatchNorm::parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "/gamma", gamma});
  out.push_back({prefix + "/beta", beta});
}

void BatchNorm::buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "/running_mean", running_mean});
  out.push_back({prefix + "/running_var", running_var});
}

BatchNorm BatchNorm::clone() const {
  return {gamma.clone(), beta.clone(), running_mean.clone(), running_var.clone(), options};
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = he_uniform({out, in}, in, rng);
  l.bias = Tensor::zeros({out});
  l.bias.set_requires_grad();
  return l;
}

void Linear::parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "/weight", weight});
  out.push_back({prefix + "/bias", bias});
}

Linear Linear::clone() const { return {weight.clone(), bias.clone()}; }

Mlp Mlp::create(std::size_t in, std::size_t hidden_dim, std::size_t out, Rng& rng) {
  Mlp m;
  m.hidden = Linear::create(in, hidden_dim, rng);
  m.norm = BatchNorm::create(hidden_dim);
  m.output = Linear::create(hidden_dim, out, rng);
  return m;
}

Tensor Mlp::forward(const Tensor& x, Mode mode, Tape* tape) {
  auto h = hidden.forward(x, tape);
  h = norm.forward(h, mode, tape);
  h = ops::relu(h, tape);
  return output.forward(h, tape);
}

void Mlp::parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  hidden.parameters(prefix + "/hidden", out);
  norm.parameters(prefix + "/bn", out);
  output.parameters(prefix + "/output", out);
}

void Mlp::buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  norm.buffers(prefix + "/bn", out);
}

Mlp Mlp::clone() const { return {hidden.clone(), norm.clone(), output.clone()}; }

std::size_t count_elements(const std::vector<NamedTensor>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.size();
  return n;
}

}  // namespace gamessl::nn
