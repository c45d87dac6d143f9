#include "treenmt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace treenmt {

double grad_check(const std::function<Tensor<double>(Tape<double>*)>& loss_fn,
                  std::span<Tensor<double>> params, double eps) {
  for (auto& p : params) p.zero_grad();

  Tape<double> tape;
  Tensor<double> loss = loss_fn(&tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double saved = p.data()[j];
      p.data()[j] = saved + eps;
      const double up = loss_fn(nullptr).item();
      p.data()[j] = saved - eps;
      const double down = loss_fn(nullptr).item();
      p.data()[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][static_cast<size_t>(j)];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace treenmt
