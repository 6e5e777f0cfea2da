#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dnae {

/// Number of chunks every data-parallel reduction is split into, regardless
/// of how many threads execute them. Chunk partials are combined in chunk
/// order, so results are bitwise identical for any thread count.
inline constexpr int kReductionChunks = 16;

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Partition [0,n) into kReductionChunks contiguous ranges (some possibly
/// empty) and run body(chunk_index, begin, end) for each, distributing chunks
/// over `threads` workers. Each chunk writes only chunk-indexed state.
inline void parallel_chunks(std::size_t n, int threads,
                            const std::function<void(int, std::size_t, std::size_t)>& body) {
    const int nc = kReductionChunks;
    const std::size_t base = n / nc, rem = n % nc;
    auto chunk_range = [&](int c, std::size_t& b, std::size_t& e) {
        std::size_t extra = static_cast<std::size_t>(c) < rem ? 1 : 0;
        b = static_cast<std::size_t>(c) * base + std::min<std::size_t>(c, rem);
        e = b + base + extra;
    };
    threads = resolve_threads(threads);
    if (threads <= 1 || n < 2) {
        for (int c = 0; c < nc; ++c) {
            std::size_t b, e;
            chunk_range(c, b, e);
            if (b < e) body(c, b, e);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int c = w; c < nc; c += threads) {
                    std::size_t b, e;
                    chunk_range(c, b, e);
                    if (b < e) body(c, b, e);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace dnae
