#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sgpde {

// Clamp a requested worker count to [1, hardware limit].
inline int resolve_threads(int requested) {
    if (requested <= 1) return 1;
    const unsigned hw = std::thread::hardware_concurrency();
    const int cap = hw == 0 ? requested : static_cast<int>(hw);
    return requested < cap ? requested : cap;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
// claimed atomically; any per-item results must go to disjoint slots so the
// caller can reduce them in a fixed order afterwards. The first exception is
// rethrown after all workers join.
template <typename Fn>
inline void parallel_chunks(long count, int threads, Fn&& fn) {
    if (count <= 0) return;
    threads = resolve_threads(threads);
    if (threads <= 1 || count == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const long i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n = threads < count ? threads : static_cast<int>(count);
    pool.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sgpde
