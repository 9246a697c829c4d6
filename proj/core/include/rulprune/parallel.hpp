#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rulprune {

/// Number of worker threads used by parallel_for. 0 selects hardware concurrency.
inline std::size_t& worker_count() {
    static std::size_t count = 0;
    return count;
}

/// Runs fn(i) for i in [0, n) across worker threads.
///
/// Each index is handled exactly once and writes only to its own output slot,
/// so results do not depend on scheduling. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::size_t threads = worker_count();
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace rulprune
