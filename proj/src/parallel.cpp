#include "unloadrl/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace unloadrl {

int default_worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t, std::size_t, int)>& body) {
  if (count == 0) return;
  if (workers <= 0) workers = default_worker_count();
  const auto w = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  if (w <= 1) {
    body(0, count, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> threads;
    threads.reserve(w - 1);
    const auto run = [&](std::size_t k) {
      const std::size_t begin = count * k / w;
      const std::size_t end = count * (k + 1) / w;
      try {
        body(begin, end, static_cast<int>(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    };
    for (std::size_t k = 1; k < w; ++k) threads.emplace_back(run, k);
    run(0);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace unloadrl
