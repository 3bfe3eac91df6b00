// SPDX-License-Identifier: Apache-2.0
#include "ftlab/kernels/kernels.hpp"

#include <cmath>

namespace ftlab::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void adam_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamStep& s) {
  const double one_minus_b1 = 1.0 - s.beta1;
  const double one_minus_b2 = 1.0 - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    double g = grad[i];
    if (s.l2 != 0.0) g = g + s.l2 * param[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / s.bias_correction1;
    const double v_hat = v[i] / s.bias_correction2;
    double p = param[i];
    if (s.decoupled_decay != 0.0) p = p - s.lr * s.decoupled_decay * p;
    param[i] = p - s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, add_scalar, adam_scalar};
  return table;
}

}  // namespace ftlab::kernels
