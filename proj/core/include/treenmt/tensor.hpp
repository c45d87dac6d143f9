#ifndef TREENMT_TENSOR_HPP
#define TREENMT_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treenmt/errors.hpp"

namespace treenmt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// When enabled, every op verifies that its output is finite and throws
// NumericError otherwise. Off by default (training-mode speed).
void set_debug_checks(bool on);
bool debug_checks();

namespace detail {

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;         // allocated lazily by backward
  bool requires_grad = false;  // set for parameters
  bool needs_grad = false;     // gradient must flow through this tensor
};

}  // namespace detail

// An n-dimensional row-major array of real values with optional gradient
// storage. Value-semantics handle: copies share the underlying buffer.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T fill);
  static Tensor from_values(Shape shape, std::vector<T> values);
  static Tensor scalar(T value);
  // Zero-initialized tensor flagged as a trainable parameter.
  static Tensor param(Shape shape);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }

  std::span<T> values() { return impl_->value; }
  std::span<const T> values() const { return impl_->value; }
  T* data() { return impl_->value.data(); }
  const T* data() const { return impl_->value.data(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) impl_->needs_grad = true;
  }
  // True when backward must propagate into this tensor (it is a parameter
  // or was produced from one under a tape).
  bool needs_grad() const { return impl_ && impl_->needs_grad; }
  void set_needs_grad(bool on) { impl_->needs_grad = on; }

  // Gradient buffer, zero-initialized on first access.
  std::span<T> grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), T(0));
    return impl_->grad;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), T(0));
  }

  // Value of a one-element tensor.
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->value[0];
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl<T>* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// Append-only record of executed ops for reverse-mode differentiation.
// backward() runs every recorded step exactly once, in reverse execution
// order. One tape per forward pass; clear() (or destruction) releases the
// recorded graph.
template <class T>
class Tape {
 public:
  void record(std::function<void()> backward_step) {
    records_.push_back(std::move(backward_step));
  }

  size_t num_records() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be scalar and
  // produced under this tape.
  void backward(Tensor<T> loss) {
    if (loss.numel() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    loss.grad()[0] += T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> records_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace treenmt

#endif  // TREENMT_TENSOR_HPP
