#include "treenmt/param_store.hpp"

#include <cmath>

namespace treenmt {

template <class T>
Tensor<T> ParamStore<T>::insert(const std::string& name, Tensor<T> t) {
  if (has(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

template <class T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape) {
  return insert(name, Tensor<T>::zeros(std::move(shape)));
}

template <class T>
Tensor<T> ParamStore<T>::create_glorot(const std::string& name, Shape shape, RngStream& rng) {
  const double fan_in = static_cast<double>(shape.front());
  const double fan_out = static_cast<double>(shape.back());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  }
  return insert(name, t);
}

template <class T>
Tensor<T> ParamStore<T>::create_full(const std::string& name, Shape shape, T fill) {
  return insert(name, Tensor<T>::full(std::move(shape), fill));
}

template <class T>
Tensor<T> ParamStore<T>::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ShapeError("unknown parameter '" + name + "'");
}

template <class T>
bool ParamStore<T>::has(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

template <class T>
int64_t ParamStore<T>::total_params() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <class T>
void ParamStore<T>::zero_grads() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace treenmt
