// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "afmi/simd/kernels.hpp"

namespace afmi::simd {

#if !defined(AFMI_HAVE_AVX2)
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(AFMI_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() noexcept {
    const char* env = std::getenv("AFMI_SIMD");
    if (env && std::string(env) == "scalar") return &scalar_table();
    if (cpu_has_avx2()) return avx2_table();
    return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

bool available(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar: return true;
        case Backend::avx2: return avx2_table() != nullptr && cpu_has_avx2();
    }
    return false;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(Backend backend) noexcept {
    if (!available(backend)) return false;
    current().store(backend == Backend::scalar ? &scalar_table() : avx2_table());
    return true;
}

std::string_view to_string(Backend backend) noexcept {
    return backend == Backend::scalar ? "scalar" : "avx2";
}

}  // namespace afmi::simd
