#include "lmke/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lmke {

unsigned resolve_thread_count(unsigned requested) {
  if (requested != 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for_blocks(std::size_t n, std::size_t block_size,
                         unsigned threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t num_blocks = (n + block_size - 1) / block_size;
  unsigned workers = std::min<std::size_t>(resolve_thread_count(threads), num_blocks);

  if (workers <= 1) {
    for (std::size_t b = 0; b < num_blocks; ++b) {
      const std::size_t begin = b * block_size;
      fn(begin, std::min(begin + block_size, n));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= num_blocks) break;
      const std::size_t begin = b * block_size;
      try {
        fn(begin, std::min(begin + block_size, n));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        break;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lmke
