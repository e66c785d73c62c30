#pragma once

#include <cstddef>
#include <functional>

namespace lmke {

// Runs fn(begin, end) over [0, n) split into blocks of block_size items.
// Block boundaries depend only on block_size, never on the worker count, so
// any computation that writes block-local outputs produces identical bytes
// under 1, 2 or 8 workers. threads == 0 picks hardware_concurrency.
void parallel_for_blocks(std::size_t n, std::size_t block_size,
                         unsigned threads,
                         const std::function<void(std::size_t, std::size_t)>& fn);

unsigned resolve_thread_count(unsigned requested);

}  // namespace lmke
