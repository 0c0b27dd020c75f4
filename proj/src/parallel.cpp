#include "fae/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace fae {

namespace {
int g_workers = 1;
}

void set_worker_count(int workers) { g_workers = workers < 1 ? 1 : workers; }

int worker_count() { return g_workers; }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
    const std::int64_t n = end - begin;
    if (n <= 0) return;
    if (g_workers == 1 || n == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next(begin);
    auto worker = [&] {
        for (;;) {
            std::int64_t i = next.fetch_add(1);
            if (i >= end) return;
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    int t = static_cast<int>(std::min<std::int64_t>(g_workers, n));
    threads.reserve(static_cast<std::size_t>(t - 1));
    for (int i = 1; i < t; ++i) threads.emplace_back(worker);
    worker();
    for (auto& th : threads) th.join();
}

}  // namespace fae
