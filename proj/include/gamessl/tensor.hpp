#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gamessl {

using Shape = std::vector<std::size_t>;

// Tensor storage is aligned to the widest vector width Eigen uses. Vectorized
// reductions peel a different number of leading elements depending on the
// address, so unaligned buffers would make results vary between runs.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major tensor with an optional gradient slot.
//
// A BasicTensor is a handle: copies share storage, and the autodiff tape
// keeps storages alive until backward() runs. Use clone() for a deep copy
// and detach() to cut a value out of the gradient graph.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor();
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), T(1)); }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, value); }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T& operator[](std::size_t i) { return s_->data[i]; }
  const T& operator[](std::size_t i) const { return s_->data[i]; }

  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Gradient buffer, allocated as zeros on first access. Const because the
  // handle does not own the storage; backward closures hold const copies.
  AlignedVector<T>& grad_buffer() const;
  void zero_grad();
  void clear_grad() { s_->grad.clear(); }

  BasicTensor detach() const;
  BasicTensor clone() const;

  bool shares_storage(const BasicTensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Ordered record of differentiable operations.
//
// Each recorded op contributes a closure that propagates the gradient of its
// output to its inputs; backward() replays them in exact reverse order.
template <class T>
class BasicTape {
 public:
  void record(std::function<void()> backward_fn);
  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }
  void clear();

  template <class U>
  friend void backward(BasicTape<U>& tape, const BasicTensor<U>& loss);

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape. The tape is consumed: a
// second call without recording a new forward pass throws ContractError.
template <class T>
void backward(BasicTape<T>& tape, const BasicTensor<T>& loss);

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;
using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace gamessl
