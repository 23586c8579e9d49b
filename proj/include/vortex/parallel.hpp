#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace vortex {

namespace detail {
inline std::atomic<int>& worker_override() {
    static std::atomic<int> n{0};
    return n;
}
}  // namespace detail

/// Worker count used by parallel_for. Resolution order: explicit
/// set_worker_count, then the VORTEX_WORKERS environment variable, then
/// hardware concurrency.
inline int worker_count() {
    int n = detail::worker_override().load(std::memory_order_relaxed);
    if (n > 0) return n;
    if (const char* env = std::getenv("VORTEX_WORKERS")) {
        const int parsed = std::atoi(env);
        if (parsed > 0) return parsed;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

inline void set_worker_count(int n) {
    detail::worker_override().store(n, std::memory_order_relaxed);
}

/// Runs body(begin, end) over a partition of [0, n) across workers. Each
/// index is processed exactly once and writes only its own outputs, so the
/// result is identical for every worker count. Cross-index reductions do not
/// belong here; do them serially in index order.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t w = static_cast<std::size_t>(workers);
    const std::size_t chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    threads.reserve(w - 1);
    for (std::size_t k = 1; k < w; ++k) {
        const std::size_t begin = k * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(std::size_t{0}, std::min(n, chunk));
    for (auto& t : threads) t.join();
}

}  // namespace vortex
