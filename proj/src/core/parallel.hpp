#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace lstr {

// Runs fn(begin, end) over contiguous chunks of [0, n). With threads == 1 the
// whole range runs inline. Chunk boundaries depend only on (n, threads), so a
// fixed configuration always produces the same work partition.
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t base = n / workers;
  const std::size_t extra = n % workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    const std::size_t end = begin + len;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

inline std::size_t chunk_count(std::size_t n, int threads) {
  if (n == 0) return 0;
  return std::min<std::size_t>(std::max(threads, 1), n);
}

}  // namespace lstr
