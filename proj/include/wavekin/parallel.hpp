// Deterministic chunked parallelism: work is split into fixed chunks whose
// results are combined in chunk-index order, so the output is identical for
// any thread count.
#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace wavekin {

/// Invoke fn(chunk_index, begin, end) for consecutive ranges of size at most
/// `chunk` covering [0, n).  Chunk boundaries depend only on n and chunk, not
/// on the thread count.  Returns the number of chunks.
inline std::size_t parallel_chunks(
    std::size_t n, std::size_t chunk, int threads,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (chunk == 0) chunk = 1;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  if (threads <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    return n_chunks;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next.fetch_add(1); c < n_chunks;
         c = next.fetch_add(1))
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
  };
  std::vector<std::thread> pool;
  const int nt = std::min<std::size_t>(threads, n_chunks);
  pool.reserve(nt);
  for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return n_chunks;
}

}  // namespace wavekin
