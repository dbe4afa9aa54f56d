#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace splatmap {

// Renderer parallelism cap. MAPPER_THREADS wins when set; otherwise hardware
// concurrency. Thread count is part of the reproducibility contract: results
// are bit-stable for a fixed count.
inline int mapper_threads() {
    if (const char* env = std::getenv("MAPPER_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, count) into contiguous chunks, one per worker. fn(worker, begin, end).
// Chunk boundaries depend only on (count, workers), so any per-worker buffers
// reduced in worker order are deterministic.
inline void parallel_chunks(int count, int workers,
                            const std::function<void(int, int, int)>& fn) {
    workers = std::max(1, std::min(workers, count));
    if (workers <= 1) {
        if (count > 0) fn(0, 0, count);
        return;
    }
    const int base = count / workers;
    const int rem = count % workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    int begin = 0;
    for (int w = 0; w < workers; ++w) {
        const int len = base + (w < rem ? 1 : 0);
        const int end = begin + len;
        pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace splatmap
