#pragma once

#include <cstddef>
#include <functional>

namespace unisae {

// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
// visited exactly once; callers write into per-index slots and reduce in
// index order so results never depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

// Thread count from LUCID_THREADS, or 1 when unset or unparsable.
int default_thread_count();

}  // namespace unisae
