#pragma once

#include <cstddef>
#include <functional>

namespace mhub {

// Worker cap shared by training and labeling. Defaults to MHUB_THREADS when
// set, otherwise std::thread::hardware_concurrency().
std::size_t num_threads();
void set_num_threads(std::size_t n);

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(worker, begin, end) for each, one chunk per thread. Chunk boundaries
// depend only on (n, threads), so per-chunk results can be reduced
// deterministically by the caller. The first exception thrown by a worker is
// rethrown on the calling thread.
void parallel_chunks(std::size_t n, std::size_t threads,
                     const std::function<void(std::size_t worker, std::size_t begin, std::size_t end)>& fn);

}  // namespace mhub
