// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include <immintrin.h>

#include "afmi/simd/kernels.hpp"

namespace afmi::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// 8 floats -> two 4-wide double FMAs
inline void fma8(const float* a, const float* b, __m256d& acc0, __m256d& acc1) {
    __m256 va = _mm256_loadu_ps(a);
    __m256 vb = _mm256_loadu_ps(b);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), acc1);
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) fma8(a + i, b + i, acc0, acc1);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void axpy_avx2(double alpha, const float* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, vx, _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

void dot4_avx2(const float* rows, std::size_t stride, const float* x, std::size_t n, double* out) {
    __m256d acc[4][2];
    for (auto& a : acc) a[0] = a[1] = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        __m256d xlo = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
        __m256d xhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
        for (std::size_t r = 0; r < 4; ++r) {
            __m256 vr = _mm256_loadu_ps(rows + r * stride + i);
            acc[r][0] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vr)), xlo, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vr, 1)), xhi, acc[r][1]);
        }
    }
    for (std::size_t r = 0; r < 4; ++r) {
        double s = hsum(_mm256_add_pd(acc[r][0], acc[r][1]));
        const float* row = rows + r * stride;
        for (std::size_t j = i; j < n; ++j) s += static_cast<double>(row[j]) * static_cast<double>(x[j]);
        out[r] = s;
    }
}

}  // namespace

const KernelTable* avx2_table() noexcept {
    static const KernelTable table{Backend::avx2, "avx2", dot_avx2, axpy_avx2, dot4_avx2};
    return &table;
}

}  // namespace afmi::simd
