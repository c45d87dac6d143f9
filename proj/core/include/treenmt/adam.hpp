#ifndef TREENMT_ADAM_HPP
#define TREENMT_ADAM_HPP

#include <cstdint>
#include <vector>

#include "treenmt/tensor.hpp"

namespace treenmt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed parameter list. First/second
// moment buffers match their parameter's shape; the step counter advances
// by exactly one per step() call.
template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  // Applies one update from the gradients currently stored on the
  // parameters. Does not clear the gradients.
  void step(double learning_rate);

  void zero_grads();
  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

  // Moment buffers, parameter-order aligned (exposed for checkpointing).
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  void set_step_count(int64_t t) { step_count_ = t; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamConfig config_;
  int64_t step_count_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace treenmt

#endif  // TREENMT_ADAM_HPP
