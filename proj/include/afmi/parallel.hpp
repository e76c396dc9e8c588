// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace afmi {

/// Runs fn(i) for i in [0,n) on up to `threads` workers (0 or 1 = inline).
/// Callers write results into per-index slots and reduce afterwards in index
/// order. The exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace afmi
