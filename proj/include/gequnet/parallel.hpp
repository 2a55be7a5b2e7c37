#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>

namespace gequnet {

// Worker cap for internal data parallelism. GEQUNET_THREADS overrides the
// hardware count; values < 1 fall back to 1.
inline int worker_count() {
    static const int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("GEQUNET_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1 && cap < hw) return cap;
            if (cap >= 1) return cap;
        }
        return hw;
    }();
    return cached;
}

// Runs f(i) for i in [0, n). Every index is processed by exactly one worker,
// so results are bit-identical to the serial loop for independent iterations.
template <class F>
void parallel_for(std::int64_t n, F&& f) {
    const int workers = worker_count();
    if (workers <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace gequnet
