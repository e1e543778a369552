#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace flashcg {

// Runs fn(begin, end, worker) over `workers` contiguous chunks of the
// boundaries [bounds[w], bounds[w+1]). Runs inline when there is one chunk.
template <class Fn>
void run_partitioned(const std::vector<std::size_t>& bounds, Fn&& fn) {
  const std::size_t chunks = bounds.empty() ? 0 : bounds.size() - 1;
  if (chunks <= 1) {
    if (chunks == 1) fn(bounds[0], bounds[1], std::size_t{0});
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> threads;
    threads.reserve(chunks - 1);
    auto guarded = [&](std::size_t w) {
      try {
        fn(bounds[w], bounds[w + 1], w);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    };
    for (std::size_t w = 1; w < chunks; ++w) threads.emplace_back(guarded, w);
    guarded(0);
  }
  if (error) std::rethrow_exception(error);
}

// Even split of [0, n) into at most `workers` chunks.
inline std::vector<std::size_t> even_bounds(std::size_t n, int workers) {
  const std::size_t w = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)),
                               std::max<std::size_t>(n, 1)));
  std::vector<std::size_t> bounds(w + 1);
  for (std::size_t i = 0; i <= w; ++i) bounds[i] = n * i / w;
  return bounds;
}

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  run_partitioned(even_bounds(n, workers), fn);
}

}  // namespace flashcg
