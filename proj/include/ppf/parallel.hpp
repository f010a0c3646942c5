#pragma once

#include <cstddef>
#include <functional>

namespace ppf {

/// Worker count: PPF_WORKERS if set and positive, else the hardware concurrency.
int worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks write to
/// disjoint output ranges, so results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 4096);

}  // namespace ppf
