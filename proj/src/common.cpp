#include "samq/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace samq {

unsigned worker_count() {
    const char* env = std::getenv("SAMQ_WORKERS");
    if (env == nullptr) return 1;
    long n = std::strtol(env, nullptr, 10);
    if (n < 1) return 1;
    return static_cast<unsigned>(n);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job) {
    const unsigned workers = worker_count();
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto drain = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            job(i);
        }
    };
    std::vector<std::thread> pool;
    const unsigned n_threads = static_cast<unsigned>(
        std::min<std::size_t>(workers, count));
    pool.reserve(n_threads - 1);
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(drain);
    drain();
    for (auto& th : pool) th.join();
}

}  // namespace samq
