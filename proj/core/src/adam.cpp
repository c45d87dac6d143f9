#include "treenmt/adam.hpp"

#include <cmath>

namespace treenmt {

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor<T>::zeros(p.shape()));
    v_.push_back(Tensor<T>::zeros(p.shape()));
  }
}

template <class T>
void Adam<T>::step(double learning_rate) {
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    T* pv = p.data();
    T* mv = m_[i].data();
    T* vv = v_[i].data();
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = b1 * static_cast<double>(mv[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(vv[j]) + (1.0 - b2) * gj * gj;
      mv[j] = static_cast<T>(mj);
      vv[j] = static_cast<T>(vj);
      const double m_hat = mj / bias1;
      const double v_hat = vj / bias2;
      pv[j] = static_cast<T>(static_cast<double>(pv[j]) -
                             learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

template <class T>
void Adam<T>::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace treenmt
