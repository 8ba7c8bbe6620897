#include "quasispec/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <string>

namespace quasispec {

int default_threads() {
    const char* env = std::getenv("QUASISPEC_THREADS");
    if (!env) return 1;
    try {
        int t = std::stoi(env);
        return t > 0 ? t : 1;
    } catch (...) {
        return 1;
    }
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    // rethrow the first failure in index order
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace quasispec
