#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace ssa {

// Worker cap: THREADS environment variable if set, else hardware concurrency.
std::size_t max_threads();

// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
// must write results to per-index slots. The partition is by contiguous
// blocks, so outputs are identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(max_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace ssa
