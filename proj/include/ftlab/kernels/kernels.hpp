// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace ftlab::kernels {

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
  double l2;                // folded into the gradient (adam / sgd style)
  double decoupled_decay;   // applied directly to the weights (adamw style)
};

/// Inner loops used by the tensor ops and the optimizers. Every backend has
/// the same contract as the scalar reference; the SIMD backends may
/// reassociate sums in `dot` and use fused multiply-add in `dot`/`axpy`, so
/// they agree with the reference to rounding, not bitwise. `adam` is
/// elementwise without contraction and matches bitwise.
struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += x
  void (*add)(const double* x, double* y, std::size_t n);
  void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamStep& step);
};

const KernelTable& scalar_table();
#if defined(FTLAB_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

bool cpu_has_avx2();

/// Table picked at first use: AVX2+FMA when the CPU reports both, otherwise
/// scalar. FTLAB_KERNELS=scalar forces the reference path.
const KernelTable& active();

/// Overrides the active table for the calling process; returns the previous one.
const KernelTable& set_active(const KernelTable& table);

}  // namespace ftlab::kernels
