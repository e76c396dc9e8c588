// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops shared by the layer kernels. Every routine has a
// scalar reference version and, on x86-64, an AVX2+FMA version; the backend is
// chosen once at startup from CPUID and can be overridden with AFMI_SIMD=scalar.
//
// Inputs are float32, accumulation is float64. The two backends sum in a
// different order, so results agree to rounding, not bit-for-bit.

#include <cstddef>
#include <string_view>

namespace afmi::simd {

enum class Backend { scalar, avx2 };

struct KernelTable {
    Backend backend;
    const char* name;
    // sum_i a[i] * b[i]
    double (*dot)(const float* a, const float* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const float* x, double* y, std::size_t n);
    // out[r] = sum_i rows[r*stride + i] * x[i] for r in [0,4)
    void (*dot4)(const float* rows, std::size_t stride, const float* x, std::size_t n, double* out);
};

const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;  // nullptr when not compiled in

bool available(Backend backend) noexcept;

/// Table used by all layer kernels.
const KernelTable& active() noexcept;

/// Switch backends; returns false (and changes nothing) if unavailable.
/// Not synchronized with concurrent kernel calls.
bool select(Backend backend) noexcept;

std::string_view to_string(Backend backend) noexcept;

}  // namespace afmi::simd
