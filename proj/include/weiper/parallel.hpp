#ifndef WEIPER_PARALLEL_HPP_
#define WEIPER_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace weiper {

// Execution knobs shared by every streaming stage.
struct RunOptions {
  // 0 selects WEIPER_THREADS from the environment, else hardware concurrency.
  std::size_t threads = 0;
  std::size_t batch_size = 1024;
};

std::size_t resolve_threads(std::size_t requested);

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(begin, end) on each. Chunk boundaries never influence per-item results,
// so callers that write disjoint outputs are deterministic for any thread
// count.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace weiper

#endif  // WEIPER_PARALLEL_HPP_
