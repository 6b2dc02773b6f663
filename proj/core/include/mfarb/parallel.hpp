#pragma once

// Deterministic data-parallel helper.  Work is cut into fixed-size blocks that
// do not depend on the worker count; per-block results are combined in block
// order, so outputs are bit-identical for any number of workers.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mfarb {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(block_index, begin, end) over [0, count) in blocks of `block` items.
/// Blocks are distributed across `workers` threads; determinism is up to the
/// caller writing only to per-block or per-item slots.
inline void parallel_blocks(std::size_t count, std::size_t block, int workers,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  block = std::max<std::size_t>(1, block);
  const std::size_t nblocks = (count + block - 1) / block;
  workers = std::max(1, workers);
  if (workers == 1 || nblocks == 1) {
    for (std::size_t bi = 0; bi < nblocks; ++bi)
      fn(bi, bi * block, std::min(count, (bi + 1) * block));
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  const int nthreads = static_cast<int>(std::min<std::size_t>(nblocks, workers));
  for (int w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t bi = static_cast<std::size_t>(w); bi < nblocks;
             bi += static_cast<std::size_t>(nthreads))
          fn(bi, bi * block, std::min(count, (bi + 1) * block));
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mfarb
