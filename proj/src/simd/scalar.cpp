// SPDX-License-Identifier: Apache-2.0
#include "afmi/simd/kernels.hpp"

namespace afmi::simd {
namespace {

double dot_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void axpy_scalar(double alpha, const float* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

void dot4_scalar(const float* rows, std::size_t stride, const float* x, std::size_t n, double* out) {
    for (std::size_t r = 0; r < 4; ++r) out[r] = dot_scalar(rows + r * stride, x, n);
}

}  // namespace

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{Backend::scalar, "scalar", dot_scalar, axpy_scalar, dot4_scalar};
    return table;
}

}  // namespace afmi::simd
