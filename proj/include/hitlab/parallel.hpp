#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hitlab {

/// Process-wide worker count used by the ensemble estimators. Results never
/// depend on it: work is split into fixed blocks and reduced in block order.
inline std::atomic<unsigned>& thread_count() {
  static std::atomic<unsigned> n{1};
  return n;
}

inline void set_thread_count(unsigned n) { thread_count().store(std::max(1U, n)); }

/// Calls fn(block) for block in [0, n_blocks), spread over thread_count()
/// workers. The first exception thrown by any block is rethrown.
template <class Fn>
void for_each_block(std::size_t n_blocks, Fn&& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count().load(), n_blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < n_blocks; b = next++) {
          try {
            fn(b);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n_blocks;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Contiguous index range of one block when `total` items are split into
/// blocks of `block_size`.
struct BlockRange {
  std::size_t begin;
  std::size_t end;
};

inline std::size_t block_count(std::size_t total, std::size_t block_size) {
  return (total + block_size - 1) / block_size;
}

inline BlockRange block_range(std::size_t block, std::size_t total, std::size_t block_size) {
  const std::size_t b = block * block_size;
  return {b, std::min(total, b + block_size)};
}

}  // namespace hitlab
