#include "focalforge/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace focalforge {

namespace {
std::atomic<int> g_threads{0};

int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    if (hc == 0) hc = 1;
    return static_cast<int>(std::min(hc, 4u));
}
}  // namespace

int num_threads() {
    int n = g_threads.load();
    return n > 0 ? n : default_threads();
}

void set_num_threads(int n) { g_threads.store(n); }

void parallel_chunks(std::int64_t n, const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int chunks = static_cast<int>(std::min<std::int64_t>(kParallelChunks, n));
    const std::int64_t per = (n + chunks - 1) / chunks;

    int workers = std::min(num_threads(), chunks);
    if (workers <= 1) {
        for (int c = 0; c < chunks; ++c) {
            std::int64_t b = c * per, e = std::min<std::int64_t>(n, b + per);
            if (b < e) fn(c, b, e);
        }
        return;
    }

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int c = next.fetch_add(1);
            if (c >= chunks) return;
            std::int64_t b = c * per, e = std::min<std::int64_t>(n, b + per);
            if (b < e) fn(c, b, e);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

}  // namespace focalforge
