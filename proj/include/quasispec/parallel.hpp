#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace quasispec {

// Thread count from QUASISPEC_THREADS, default 1.
int default_threads();

// Runs fn(i) for i in [0, n) over `threads` workers with static striding.
// Each index is handled by exactly one worker; callers write into
// pre-sized slots, so results do not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace quasispec
