#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace otce {

/// Resolve a thread-count request: 0 means "use the hardware", anything else
/// is taken as given (floored at 1).
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run fn(begin, end) over disjoint contiguous index ranges. Each index is
/// processed by exactly one thread, so results written per-index are
/// independent of the thread count and of scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const int t = std::min<std::size_t>(resolve_threads(threads), count == 0 ? 1 : count);
    if (t <= 1 || count < 2) {
        fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (count + t - 1) / t;
    for (int k = 0; k < t; ++k) {
        const std::size_t lo = std::min(count, static_cast<std::size_t>(k) * chunk);
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace otce
