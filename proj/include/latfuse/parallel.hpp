#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace latfuse {

// Worker count used by parallelized kernels. Defaults to LATFUSE_THREADS if
// set, else hardware concurrency. Not thread-safe to mutate concurrently
// with running kernels; the CLI sets it once at startup.
int num_threads();
void set_num_threads(int n);

// Splits [0, count) into contiguous chunks, one per worker. Each output
// element is owned by exactly one worker and computed with a fixed
// sequential reduction order inside `body`, so results are bit-identical
// for every worker count. `body(begin, end)` must not throw.
template <typename Body>
void parallel_for(int64_t count, const Body& body, int64_t grain = 1024) {
    if (count <= 0) return;
    int workers = num_threads();
    if (workers > count) workers = static_cast<int>(count);
    if (workers <= 1 || count < grain) {
        body(int64_t{0}, count);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers) - 1);
    const int64_t chunk = (count + workers - 1) / workers;
    for (int t = 1; t < workers; ++t) {
        const int64_t begin = t * chunk;
        if (begin >= count) break;
        const int64_t end = std::min(count, begin + chunk);
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(int64_t{0}, std::min(count, chunk));
    for (auto& th : threads) th.join();
}

}  // namespace latfuse
