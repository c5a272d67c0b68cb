#pragma once

#include <cstddef>
#include <vector>

#include "gamessl/tensor.hpp"

// Differentiable tensor operations.
//
// Every op takes an optional tape as its last argument. The op is recorded,
// and its output marked requires_grad, only when a tape is given and at least
// one input requires a gradient. Passing no tape evaluates without recording.
namespace gamessl::ops {

enum class Mode { Train, Eval };

// [m,k] x [k,n] -> [m,n]
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a, BasicTape<T>* tape = nullptr);

// y = x W^T + b with x [N,in], W [out,in], b [out].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      BasicTape<T>* tape = nullptr);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T value, BasicTape<T>* tape = nullptr);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// Cross-correlation (no kernel flip). input [N,C,H,W], kernel [F,C,kH,kW]
// -> [N,F,(H+2p-kH)/s+1,(W+2p-kW)/s+1], zero padding.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding, BasicTape<T>* tape = nullptr);

struct BatchNormOptions {
  Mode mode = Mode::Train;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Per-channel normalization of [N,C] or [N,C,H,W] input.
//
// Train mode normalizes with the (biased) batch statistics and blends the
// batch mean and unbiased batch variance into the running buffers:
//   running <- (1 - momentum) * running + momentum * batch.
// Eval mode computes gamma * (x - running_mean) / sqrt(running_var + eps) + beta.
template <class T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, const BatchNormOptions& options,
                          BasicTape<T>* tape = nullptr);

// [N,C,H,W] -> [N,C]
template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// Divides each trailing-axis vector by max(||v||, epsilon).
template <class T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, T epsilon = T(1e-12), BasicTape<T>* tape = nullptr);

// Row-wise log-softmax of a [N,K] matrix.
template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// Copy of a square [N,N] matrix with its diagonal replaced by a constant.
// The replaced entries receive no gradient.
template <class T>
BasicTensor<T> fill_diagonal(const BasicTensor<T>& x, T value, BasicTape<T>* tape = nullptr);

// y[i] = x[i, index[i]] for x [N,K]; y has shape [N].
template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index, BasicTape<T>* tape = nullptr);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);
// [N,K] -> [N]
template <class T>
BasicTensor<T> row_sum(const BasicTensor<T>& x, BasicTape<T>* tape = nullptr);

// Rows [begin, end) along axis 0.
template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end, BasicTape<T>* tape = nullptr);
// Stacks along axis 0; trailing shapes must agree.
template <class T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape = nullptr);

}  // namespace gamessl::ops
