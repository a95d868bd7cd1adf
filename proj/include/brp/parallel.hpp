#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace brp {

// Worker cap: min(hardware threads, BRP_THREADS when set). BRP_THREADS=1
// forces sequential execution.
inline std::size_t max_threads() {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("BRP_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
    }
    return hw;
}

// Runs fn(i) for i in [0, n). Safe only for bodies whose result for index i
// is independent of execution order; every caller in this library writes
// into disjoint slots of a preallocated buffer, so results are identical
// for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(max_threads(), std::max<std::size_t>(n, 1));
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace brp
