#pragma once

#include <cstddef>
#include <functional>

namespace unloadrl {

// Worker count used when a config asks for 0 (= available parallelism).
int default_worker_count();

// Runs body(begin, end, worker) over [0, count) split into contiguous blocks,
// one block per worker. Blocks are fixed by (count, workers) only. The first
// exception thrown by any worker is rethrown on the caller after all joined.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t begin, std::size_t end, int worker)>& body);

}  // namespace unloadrl
