// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rmtbias {

// Worker count: an explicit request wins; otherwise the RMTBIAS_THREADS
// environment variable sets the count (oversubscription allowed, capped at
// 256), falling back to the hardware concurrency.
inline unsigned thread_budget(unsigned requested = 0) {
    if (requested != 0) return requested;
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RMTBIAS_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<unsigned>(std::min<long>(v, 256));
    }
    return n;
}

// Runs fn(block_index) for block_index in [0, n_blocks) across n_threads
// workers. Blocks are claimed through an atomic counter, so the assignment of
// blocks to threads is arbitrary; callers must make each block's work
// self-contained (write results into per-block slots, reduce afterwards in
// block order) for deterministic output.
template <typename Fn>
void parallel_blocks(std::size_t n_blocks, unsigned n_threads, Fn&& fn) {
    if (n_blocks == 0) return;
    if (n_threads <= 1 || n_blocks == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex guard;
    auto worker = [&]() {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(guard);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(n_threads, n_blocks));
    pool.reserve(spawn);
    for (unsigned i = 0; i < spawn; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace rmtbias
