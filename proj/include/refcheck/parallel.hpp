#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace refcheck {

// Execution policy for the numeric kernels. Every kernel writes each result
// into its own preallocated slot and draws randomness from a per-index
// substream, so the serial and OpenMP paths produce identical bytes; the
// serial path is the reference the tests compare against.
enum class Exec { serial, parallel };

template <typename Fn>
void parallel_for(std::size_t n, Exec mode, Fn&& fn) {
    if (mode == Exec::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(refcheck_parallel_for_err)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

// Bounded worker pool for latency-bound work (backend calls). Unlike
// parallel_for this spawns real threads so workers can block on I/O.
inline void bounded_for(std::size_t n, unsigned max_workers,
                        const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned workers =
        std::max(1u, std::min<unsigned>(max_workers, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err = nullptr;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace refcheck
