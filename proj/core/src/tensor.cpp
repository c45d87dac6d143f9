#include "treenmt/tensor.hpp"

#include <atomic>
#include <sstream>

namespace treenmt {

namespace {
std::atomic<bool> g_debug_checks{false};
}

void set_debug_checks(bool on) { g_debug_checks.store(on, std::memory_order_relaxed); }
bool debug_checks() { return g_debug_checks.load(std::memory_order_relaxed); }

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <class T>
std::shared_ptr<detail::TensorImpl<T>> make_impl(Shape shape, std::vector<T> values) {
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  return impl;
}

}  // namespace

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  std::vector<T> v(static_cast<size_t>(shape_numel(shape)), T(0));
  return Tensor(make_impl<T>(std::move(shape), std::move(v)));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T fill) {
  std::vector<T> v(static_cast<size_t>(shape_numel(shape)), fill);
  return Tensor(make_impl<T>(std::move(shape), std::move(v)));
}

template <class T>
Tensor<T> Tensor<T>::from_values(Shape shape, std::vector<T> values) {
  return Tensor(make_impl<T>(std::move(shape), std::move(values)));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from_values({1}, {value});
}

template <class T>
Tensor<T> Tensor<T>::param(Shape shape) {
  Tensor t = zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace treenmt
