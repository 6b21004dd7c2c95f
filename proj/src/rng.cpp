#include "chanform/common.hpp"

#include <atomic>

namespace chanform {

namespace {
std::atomic<int> g_max_workers{0}; // 0 = hardware concurrency
}

int max_workers() {
    int n = g_max_workers.load();
    if (n <= 0) {
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }
    return n;
}

void set_max_workers(int n) { g_max_workers.store(n); }

} // namespace chanform
