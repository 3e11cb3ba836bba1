#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dsagen {

/// SplitMix64 finalizer; derives independent stream seeds from (base, index).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base ^ (index + 0x9E3779B97F4A7C15ULL) * 0xBF58476D1CE4E5B9ULL;
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work is handed out
/// by a shared counter; callers write into slot i so results never depend on
/// the schedule. The first exception (lowest index) is rethrown.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::clamp(workers, 1, std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex mu;
    int next = 0;
    int failed_at = n;
    std::exception_ptr error;
    auto body = [&] {
        for (;;) {
            int i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= n) return;
                i = next++;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace dsagen
