#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace gfc {

// Thread count: explicit flag wins, then GFC_THREADS, then 1.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("GFC_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

// Runs fn(i) for i in [0, n). Work items must be independent and write only
// to their own slots; callers reduce the slots afterwards in index order, so
// results do not depend on the thread count.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t nthreads = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (size_t w = 0; w < nthreads; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t i = w; i < n; i += nthreads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace gfc
