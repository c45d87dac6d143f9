#ifndef TREENMT_GRAD_CHECK_HPP
#define TREENMT_GRAD_CHECK_HPP

#include <functional>
#include <span>

#include "treenmt/tensor.hpp"

namespace treenmt {

// Verifies reverse-mode gradients against central finite differences
// (f(p+eps) - f(p-eps)) / 2eps in double precision. `loss_fn` must build
// the scalar loss from the current parameter values; it receives the tape
// for the analytic pass and nullptr for the perturbed forward evaluations.
// Returns the maximum relative error |a - b| / max(|a|, |b|, 1e-8) over
// every element of every parameter.
double grad_check(const std::function<Tensor<double>(Tape<double>*)>& loss_fn,
                  std::span<Tensor<double>> params, double eps = 1e-5);

}  // namespace treenmt

#endif  // TREENMT_GRAD_CHECK_HPP
