#ifndef TREENMT_PARAM_STORE_HPP
#define TREENMT_PARAM_STORE_HPP

#include <string>
#include <utility>
#include <vector>

#include "treenmt/rng.hpp"
#include "treenmt/tensor.hpp"

namespace treenmt {

// Named trainable parameters in creation order. Creation order is the
// initialization draw order, so models built the same way from the same
// seed get identical values.
template <class T>
class ParamStore {
 public:
  // Zero-initialized parameter.
  Tensor<T> create(const std::string& name, Shape shape);

  // Uniform Glorot init: limit = sqrt(6 / (fan_in + fan_out)) with
  // fan_in = shape[0], fan_out = shape.back().
  Tensor<T> create_glorot(const std::string& name, Shape shape, RngStream& rng);

  // Constant-filled parameter (layer-norm gains).
  Tensor<T> create_full(const std::string& name, Shape shape, T fill);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  Tensor<T> find(const std::string& name) const;
  bool has(const std::string& name) const;

  size_t size() const { return entries_.size(); }
  int64_t total_params() const;
  void zero_grads();

 private:
  Tensor<T> insert(const std::string& name, Tensor<T> t);
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace treenmt

#endif  // TREENMT_PARAM_STORE_HPP
