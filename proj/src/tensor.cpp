#include "gamessl/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "gamessl/error.hpp"

namespace gamessl {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimension sizes must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <class T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{1}) {}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : s_(std::make_shared<Storage>()) {
  check_shape(shape);
  s_->data.assign(numel(shape), fill);
  s_->shape = std::move(shape);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : s_(std::make_shared<Storage>()) {
  check_shape(shape);
  if (numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                         " data values");
  }
  s_->shape = std::move(shape);
  s_->data.assign(data.begin(), data.end());
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= s_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s_->shape));
  }
  return s_->shape[axis];
}

template <class T>
T BasicTensor<T>::item() const {
  if (s_->data.size() != 1) throw ContractError("item() requires a single-element tensor, shape is " + to_string(shape()));
  return s_->data[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

template <class T>
AlignedVector<T>& BasicTensor<T>::grad_buffer() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <class T>
void BasicTensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  BasicTensor out;
  out.s_->shape = s_->shape;
  out.s_->data = s_->data;
  return out;
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor out = detach();
  out.s_->requires_grad = s_->requires_grad;
  return out;
}

template <class T>
void BasicTape<T>::record(std::function<void()> backward_fn) {
  consumed_ = false;
  ops_.push_back(std::move(backward_fn));
}

template <class T>
void BasicTape<T>::clear() {
  ops_.clear();
  consumed_ = false;
}

template <class T>
void backward(BasicTape<T>& tape, const BasicTensor<T>& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (tape.consumed_) {
    throw ContractError("backward() called twice without a new forward pass");
  }
  if (loss.requires_grad()) {
    // Shares storage with the caller's handle, so the seed lands on the graph node.
    BasicTensor<T> seed = loss;
    seed.grad_buffer()[0] += T(1);
  }
  for (auto it = tape.ops_.rbegin(); it != tape.ops_.rend(); ++it) (*it)();
  tape.ops_.clear();
  tape.consumed_ = true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;
template void backward<float>(BasicTape<float>&, const BasicTensor<float>&);
template void backward<double>(BasicTape<double>&, const BasicTensor<double>&);

}  // namespace gamessl
