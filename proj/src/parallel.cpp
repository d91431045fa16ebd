#include "envkit/parallel.hpp"

namespace envkit {

namespace {
std::atomic<int> g_limit{0};
}

void set_thread_limit(int n) {
    g_limit = std::max(0, n);
}

int thread_limit() {
    const int n = g_limit.load();
    if (n > 0)
        return n;
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace envkit
