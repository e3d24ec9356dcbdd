// common.cpp — parallel map and thread-count plumbing

#include "pclick/common.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace pclick {

namespace {
std::atomic<int> g_threads{0};
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

int default_thread_count() {
    int t = g_threads.load();
    if (t > 0) return t;
    if (const char* env = std::getenv("PCLICK_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_default_thread_count(int threads) { g_threads.store(threads); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads) {
    if (threads <= 0) threads = default_thread_count();
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            body(i);
        }
    };
    std::vector<std::thread> pool;
    int nw = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(threads)));
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

}  // namespace pclick
