#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace homlab {

/// Runs body(i) for i in [0, count). Work items must be independent; callers
/// write results into index-addressed slots so the outcome does not depend on
/// scheduling. If any items throw, the exception of the lowest failing index
/// is rethrown after all workers have joined.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::size_t failed_index = count;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(threads), count));
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace homlab
