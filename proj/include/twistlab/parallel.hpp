#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

namespace twistlab {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t default_seed = 0x7457'6973'746c'6162ULL;

// splitmix64 finalizer; mixes (seed, stream) into an independent child seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace parallel {

inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> n{0};
    return n;
}

// 0 restores the default (hardware concurrency).
inline void set_thread_count(unsigned n) { thread_setting().store(n); }

inline unsigned thread_count() {
    unsigned n = thread_setting().load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

// Number of chunks work is cut into; fixed so results never depend on threads.
inline constexpr std::size_t default_chunks = 64;

struct Range {
    std::size_t index;  // chunk number
    std::uint64_t begin, end;
};

// Cuts [0, n) into `chunks` contiguous pieces, runs fn(Range) on each (possibly
// concurrently) and folds the results left to right in chunk order.
template <class Result, class ChunkFn, class Merge>
Result chunked_reduce(std::uint64_t n, ChunkFn&& fn, Merge&& merge, Result init,
                      std::size_t chunks = default_chunks) {
    if (n == 0) return init;
    chunks = static_cast<std::size_t>(std::min<std::uint64_t>(chunks, n));
    std::vector<std::optional<Result>> parts(chunks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            Range r{c, n * c / chunks, n * (c + 1) / chunks};
            try {
                parts[c].emplace(fn(r));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };

    unsigned t = std::min<std::size_t>(thread_count(), chunks);
    if (t <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(t);
        for (unsigned i = 0; i < t; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    Result acc = std::move(init);
    for (auto& p : parts) acc = merge(std::move(acc), std::move(*p));
    return acc;
}

}  // namespace parallel
}  // namespace twistlab
