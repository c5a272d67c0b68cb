#include "gamessl/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "gamessl/error.hpp"

namespace gamessl::ops {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
bool tracking(BasicTape<T>* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
  }
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <class T>
ConstMatMap<T> as_matrix(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
MatMap<T> as_matrix(AlignedVector<T>& v, std::size_t rows, std::size_t cols) {
  return MatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
MatMap<T> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Elementwise binary op with per-operand local derivatives.
template <class T, class Fwd, class DA, class DB>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape, const char* name, Fwd fwd,
                      DA da, DB db) {
  require_same_shape(a, b, name);
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i], y[i]);
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad();
    tape->record([a, b, out, da, db]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto x = a.data();
      auto y = b.data();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(x[i], y[i]);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(x[i], y[i]);
      }
    });
  }
  return out;
}

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t f, kh, kw;
  std::size_t stride, pad;
  std::size_t oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto pixels = g.pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    const T* plane = x + ch * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((ch * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto pixels = g.pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    T* plane = dx + ch * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((ch * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Views [N,C] or [N,C,...] as (N, C, spatial).
template <class T>
void channel_layout(const BasicTensor<T>& x, std::size_t& n, std::size_t& c, std::size_t& s) {
  if (x.rank() < 2) throw DimensionError("batch_norm: expected [N,C,...] input, got " + to_string(x.shape()));
  n = x.dim(0);
  c = x.dim(1);
  s = x.size() / (n * c);
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  BasicTensor<T> out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a, m, k) * as_matrix(b, k, n);
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad();
    tape->record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      auto g = ConstMatMap<T>(out.grad().data(), m, n);
      if (a.requires_grad()) as_matrix(a.grad_buffer(), m, k).noalias() += g * as_matrix(b, k, n).transpose();
      if (b.requires_grad()) as_matrix(b.grad_buffer(), k, n).noalias() += as_matrix(a, m, k).transpose() * g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a, BasicTape<T>* tape) {
  require_rank(a, 2, "transpose");
  const auto m = a.dim(0), n = a.dim(1);
  BasicTensor<T> out({n, m});
  as_matrix(out, n, m) = as_matrix(a, m, n).transpose();
  if (tracking(tape, {&a})) {
    out.set_requires_grad();
    tape->record([a, out, m, n]() mutable {
      if (!out.has_grad()) return;
      as_matrix(a.grad_buffer(), m, n) += ConstMatMap<T>(out.grad().data(), n, m).transpose();
    });
  }
  return out;
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      BasicTape<T>* tape) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const auto n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in || bias.size() != outf) {
    throw DimensionError("linear: input " + to_string(x.shape()) + ", weight " + to_string(weight.shape()) +
                         ", bias " + to_string(bias.shape()));
  }
  BasicTensor<T> out({n, outf});
  auto y = as_matrix(out, n, outf);
  y.noalias() = as_matrix(x, n, in) * as_matrix(weight, outf, in).transpose();
  y.rowwise() += as_matrix(bias, 1, outf).row(0);
  if (tracking(tape, {&x, &weight, &bias})) {
    out.set_requires_grad();
    tape->record([x, weight, bias, out, n, in, outf]() mutable {
      if (!out.has_grad()) return;
      auto g = ConstMatMap<T>(out.grad().data(), n, outf);
      if (x.requires_grad()) as_matrix(x.grad_buffer(), n, in).noalias() += g * as_matrix(weight, outf, in);
      if (weight.requires_grad()) {
        as_matrix(weight.grad_buffer(), outf, in).noalias() += g.transpose() * as_matrix(x, n, in);
      }
      if (bias.requires_grad()) as_matrix(bias.grad_buffer(), 1, outf) += g.colwise().sum();
    });
  }
  return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  return binary(
      a, b, tape, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  return binary(
      a, b, tape, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  return binary(
      a, b, tape, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor, BasicTape<T>* tape) {
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (tracking(tape, {&a})) {
    out.set_requires_grad();
    tape->record([a, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T value, BasicTape<T>* tape) {
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + value;
  if (tracking(tape, {&a})) {
    out.set_requires_grad();
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x, BasicTape<T>* tape) {
  BasicTensor<T> out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto in = x.data();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in[i] > T(0)) gx[i] += g[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding, BasicTape<T>* tape) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.c) {
    throw DimensionError("conv2d: input has " + std::to_string(g.c) + " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                         to_string(input.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  BasicTensor<T> out({g.n, g.f, g.oh, g.ow});
  AlignedVector<T> cols(g.patch() * g.pixels());
  const auto in_stride = g.c * g.h * g.w;
  const auto out_stride = g.f * g.pixels();
  auto wmat = as_matrix(kernel, g.f, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * in_stride, g, cols.data());
    MatMap<T>(out.data().data() + n * out_stride, g.f, g.pixels()).noalias() =
        wmat * as_matrix(cols, g.patch(), g.pixels());
  }

  if (tracking(tape, {&input, &kernel})) {
    out.set_requires_grad();
    tape->record([input, kernel, out, g]() mutable {
      if (!out.has_grad()) return;
      AlignedVector<T> cols(g.patch() * g.pixels());
      AlignedVector<T> dcols(input.requires_grad() ? cols.size() : 0);
      const auto in_stride = g.c * g.h * g.w;
      const auto out_stride = g.f * g.pixels();
      auto wmat = as_matrix(kernel, g.f, g.patch());
      T* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
      T* gw = kernel.requires_grad() ? kernel.grad_buffer().data() : nullptr;
      for (std::size_t n = 0; n < g.n; ++n) {
        auto gy = ConstMatMap<T>(out.grad().data() + n * out_stride, g.f, g.pixels());
        if (gw != nullptr) {
          im2col(input.data().data() + n * in_stride, g, cols.data());
          MatMap<T>(gw, g.f, g.patch()).noalias() += gy * as_matrix(cols, g.patch(), g.pixels()).transpose();
        }
        if (gx != nullptr) {
          as_matrix(dcols, g.patch(), g.pixels()).noalias() = wmat.transpose() * gy;
          col2im_add(dcols.data(), g, gx + n * in_stride);
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, const BatchNormOptions& options,
                          BasicTape<T>* tape) {
  std::size_t n = 0, c = 0, s = 0;
  channel_layout(input, n, c, s);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw DimensionError("batch_norm: parameter size does not match " + std::to_string(c) + " channels");
  }
  const bool train = options.mode == Mode::Train;
  if (train && n < 2) throw DimensionError("batch_norm: train mode needs a batch of at least 2, got 1");

  const std::size_t count = n * s;
  BasicTensor<T> out(input.shape());
  AlignedVector<T> xhat(input.size());
  AlignedVector<T> inv_std(c);
  auto x = input.data();
  auto y = out.data();

  for (std::size_t ch = 0; ch < c; ++ch) {
    if (train) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) acc += p[j];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) {
          const double d = p[j] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      const double istd = 1.0 / std::sqrt(var + options.epsilon);
      inv_std[ch] = static_cast<T>(istd);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) {
          const T xh = static_cast<T>((x[base + j] - mu) * istd);
          xhat[base + j] = xh;
          y[base + j] = gamma[ch] * xh + beta[ch];
        }
      }
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      running_mean[ch] = static_cast<T>((1.0 - options.momentum) * running_mean[ch] + options.momentum * mu);
      running_var[ch] = static_cast<T>((1.0 - options.momentum) * running_var[ch] + options.momentum * unbiased);
    } else {
      const T m = running_mean[ch];
      const T denom = std::sqrt(running_var[ch] + static_cast<T>(options.epsilon));
      inv_std[ch] = T(1) / denom;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) {
          xhat[base + j] = (x[base + j] - m) / denom;
          y[base + j] = gamma[ch] * (x[base + j] - m) / denom + beta[ch];
        }
      }
    }
  }

  if (tracking(tape, {&input, &gamma, &beta})) {
    out.set_requires_grad();
    tape->record([input, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, s,
                  train]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      const double count = static_cast<double>(n * s);
      T* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
      T* gg = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
      T* gb = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + ch) * s;
          for (std::size_t j = 0; j < s; ++j) {
            sum_dy += gy[base + j];
            sum_dy_xhat += static_cast<double>(gy[base + j]) * xhat[base + j];
          }
        }
        if (gg != nullptr) gg[ch] += static_cast<T>(sum_dy_xhat);
        if (gb != nullptr) gb[ch] += static_cast<T>(sum_dy);
        if (gx == nullptr) continue;
        const double k = static_cast<double>(gamma[ch]) * inv_std[ch];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + ch) * s;
          for (std::size_t j = 0; j < s; ++j) {
            if (train) {
              gx[base + j] += static_cast<T>(k * (gy[base + j] - sum_dy / count - xhat[base + j] * sum_dy_xhat / count));
            } else {
              gx[base + j] += static_cast<T>(k * gy[base + j]);
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x, BasicTape<T>* tape) {
  require_rank(x, 4, "global_avg_pool");
  const auto n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  BasicTensor<T> out({n, c});
  auto in = x.data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s; ++j) acc += in[i * s + j];
    out[i] = static_cast<T>(acc / static_cast<double>(s));
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, n, c, s]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& gx = x.grad_buffer();
      const T inv = T(1) / static_cast<T>(s);
      for (std::size_t i = 0; i < n * c; ++i) {
        const T v = g[i] * inv;
        for (std::size_t j = 0; j < s; ++j) gx[i * s + j] += v;
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, T epsilon, BasicTape<T>* tape) {
  const auto p = x.shape().back();
  const auto rows = x.size() / p;
  BasicTensor<T> out(x.shape());
  AlignedVector<T> denom(rows);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < p; ++j) sq += static_cast<double>(in[r * p + j]) * in[r * p + j];
    const T norm = static_cast<T>(std::sqrt(sq));
    denom[r] = std::max(norm, epsilon);
    for (std::size_t j = 0; j < p; ++j) o[r * p + j] = in[r * p + j] / denom[r];
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, denom = std::move(denom), p, rows, epsilon]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto& gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        if (denom[r] > epsilon) {
          double dot = 0.0;
          for (std::size_t j = 0; j < p; ++j) dot += static_cast<double>(y[r * p + j]) * g[r * p + j];
          for (std::size_t j = 0; j < p; ++j) {
            gx[r * p + j] += static_cast<T>((g[r * p + j] - y[r * p + j] * dot) / denom[r]);
          }
        } else {
          for (std::size_t j = 0; j < p; ++j) gx[r * p + j] += g[r * p + j] / denom[r];
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, BasicTape<T>* tape) {
  require_rank(x, 2, "log_softmax");
  const auto n = x.dim(0), k = x.dim(1);
  BasicTensor<T> out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = in.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(static_cast<double>(row[j] - mx));
    const T lse = static_cast<T>(std::log(acc));
    for (std::size_t j = 0; j < k; ++j) o[r * k + j] = row[j] - mx - lse;
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, n, k]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto& gx = x.grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          gx[r * k + j] += static_cast<T>(g[r * k + j] - std::exp(static_cast<double>(y[r * k + j])) * gs);
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> fill_diagonal(const BasicTensor<T>& x, T value, BasicTape<T>* tape) {
  require_rank(x, 2, "fill_diagonal");
  const auto n = x.dim(0);
  if (x.dim(1) != n) throw DimensionError("fill_diagonal: matrix is not square " + to_string(x.shape()));
  BasicTensor<T> out = x.detach();
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = value;
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) gx[i * n + j] += g[i * n + j];
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index, BasicTape<T>* tape) {
  require_rank(x, 2, "pick");
  const auto n = x.dim(0), k = x.dim(1);
  if (index.size() != n) throw DimensionError("pick: need one index per row");
  BasicTensor<T> out({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= k) throw DimensionError("pick: column index out of range");
    out[i] = x[i * k + index[i]];
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, index, k]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < index.size(); ++i) gx[i * k + index[i]] += g[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x, BasicTape<T>* tape) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, BasicTape<T>* tape) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const auto count = static_cast<double>(x.size());
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc / count));
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, count]() mutable {
      if (!out.has_grad()) return;
      const T g = static_cast<T>(out.grad()[0] / count);
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> row_sum(const BasicTensor<T>& x, BasicTape<T>* tape) {
  require_rank(x, 2, "row_sum");
  const auto n = x.dim(0), k = x.dim(1);
  BasicTensor<T> out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += x[r * k + j];
    out[r] = static_cast<T>(acc);
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, n, k]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& gx = x.grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += g[r];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end, BasicTape<T>* tape) {
  const auto rows = x.dim(0);
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") for " + std::to_string(rows) + " rows");
  }
  const auto width = x.size() / rows;
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                      x.data().begin() + static_cast<std::ptrdiff_t>(end * width));
  BasicTensor<T> out(std::move(shape), std::move(data));
  if (tracking(tape, {&x})) {
    out.set_requires_grad();
    tape->record([x, out, begin, width]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * width + i] += g[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b, BasicTape<T>* tape) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw DimensionError("concat_rows: trailing shapes differ " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<T> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  BasicTensor<T> out(std::move(shape), std::move(data));
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad();
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[a.size() + i];
      }
    });
  }
  return out;
}

#define GAMESSL_INSTANTIATE_OPS(T)                                                                                  \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);                      \
  template BasicTensor<T> transpose(const BasicTensor<T>&, BasicTape<T>*);                                          \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*); \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);                         \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);                         \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);                         \
  template BasicTensor<T> scale(const BasicTensor<T>&, T, BasicTape<T>*);                                           \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T, BasicTape<T>*);                                      \
  template BasicTensor<T> relu(const BasicTensor<T>&, BasicTape<T>*);                                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t,            \
                                 BasicTape<T>*);                                                                    \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,           \
                                     BasicTensor<T>&, BasicTensor<T>&, const BatchNormOptions&, BasicTape<T>*);     \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&, BasicTape<T>*);                                    \
  template BasicTensor<T> l2_normalize(const BasicTensor<T>&, T, BasicTape<T>*);                                    \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, BasicTape<T>*);                                        \
  template BasicTensor<T> fill_diagonal(const BasicTensor<T>&, T, BasicTape<T>*);                                   \
  template BasicTensor<T> pick(const BasicTensor<T>&, const std::vector<std::size_t>&, BasicTape<T>*);              \
  template BasicTensor<T> sum(const BasicTensor<T>&, BasicTape<T>*);                                                \
  template BasicTensor<T> mean(const BasicTensor<T>&, BasicTape<T>*);                                               \
  template BasicTensor<T> row_sum(const BasicTensor<T>&, BasicTape<T>*);                                            \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t, BasicTape<T>*);               \
  template BasicTensor<T> concat_rows(const BasicTensor<T>&, const BasicTensor<T>&, BasicTape<T>*);

GAMESSL_INSTANTIATE_OPS(float)
GAMESSL_INSTANTIATE_OPS(double)

#undef GAMESSL_INSTANTIATE_OPS

}  // namespace gamessl::ops
