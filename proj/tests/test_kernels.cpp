// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "ftlab/kernels/kernels.hpp"
#include "ftlab/tensor/rng.hpp"

using namespace ftlab;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<const kernels::KernelTable*> simd_tables() {
  std::vector<const kernels::KernelTable*> out;
#if defined(FTLAB_HAVE_AVX2)
  if (kernels::cpu_has_avx2()) out.push_back(&kernels::avx2_table());
#endif
  return out;
}

}  // namespace

TEST_CASE("active table is one of the known backends") {
  const auto& k = kernels::active();
  CHECK((k.name == "scalar" || k.name == "avx2"));
#if defined(FTLAB_HAVE_AVX2)
  if (kernels::cpu_has_avx2() && std::getenv("FTLAB_KERNELS") == nullptr) CHECK(k.name == "avx2");
#endif
}

TEST_CASE("set_active swaps and restores") {
  const auto& before = kernels::active();
  const auto& prev = kernels::set_active(kernels::scalar_table());
  CHECK(&prev == &before);
  CHECK(kernels::active().name == "scalar");
  kernels::set_active(before);
  CHECK(&kernels::active() == &before);
}

TEST_CASE("simd dot/axpy/add agree with the scalar reference on every tail length") {
  const auto& ref = kernels::scalar_table();
  Rng rng(11);
  for (const auto* simd : simd_tables()) {
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto a = random_vec(n, rng);
      const auto b = random_vec(n, rng);
      double magnitude = 0.0;
      for (std::size_t i = 0; i < n; ++i) magnitude += std::abs(a[i] * b[i]);
      CHECK(std::abs(simd->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
            1e-14 * (magnitude + 1.0));

      auto y_ref = b;
      auto y_simd = b;
      ref.axpy(0.37, a.data(), y_ref.data(), n);
      simd->axpy(0.37, a.data(), y_simd.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y_ref[i] - y_simd[i]) <= 1e-15 * (std::abs(y_ref[i]) + 1.0));

      y_ref = b;
      y_simd = b;
      ref.add(a.data(), y_ref.data(), n);
      simd->add(a.data(), y_simd.data(), n);
      CHECK(std::memcmp(y_ref.data(), y_simd.data(), n * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("simd adam update is bitwise equal to the scalar reference") {
  const auto& ref = kernels::scalar_table();
  Rng rng(5);
  for (const auto* simd : simd_tables()) {
    for (double l2 : {0.0, 0.01}) {
      for (double decay : {0.0, 0.1}) {
        const std::size_t n = 37;
        auto p_ref = random_vec(n, rng);
        auto g = random_vec(n, rng);
        auto p_simd = p_ref;
        std::vector<double> m_ref(n), v_ref(n), m_simd(n), v_simd(n);
        for (int t = 1; t <= 5; ++t) {
          const kernels::AdamStep step{1e-3, 0.9, 0.999, 1e-8, 1.0 - std::pow(0.9, t),
                                       1.0 - std::pow(0.999, t), l2, decay};
          ref.adam(p_ref.data(), g.data(), m_ref.data(), v_ref.data(), n, step);
          simd->adam(p_simd.data(), g.data(), m_simd.data(), v_simd.data(), n, step);
        }
        CHECK(std::memcmp(p_ref.data(), p_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(m_ref.data(), m_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(v_ref.data(), v_simd.data(), n * sizeof(double)) == 0);
      }
    }
  }
}
