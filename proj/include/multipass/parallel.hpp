#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace multipass {

/// Number of worker threads to use. Respects the MULTIPASS_THREADS
/// environment variable; falls back to the hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("MULTIPASS_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1)
            return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1u;
}

/// Runs body(block_index) for block_index in [0, blocks). Blocks are
/// distributed over threads; each block must be independent of the others.
/// Results must be written into block-indexed slots so the merge order is
/// deterministic regardless of scheduling.
inline void parallel_for_blocks(std::size_t blocks, const std::function<void(std::size_t)>& body) {
    unsigned workers = std::min<std::size_t>(thread_budget(), blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            body(b);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t b = w; b < blocks; b += workers)
                body(b);
        });
    }
    for (auto& t : pool)
        t.join();
}

} // namespace multipass
