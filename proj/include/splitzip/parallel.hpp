#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace splitzip {

/// Worker count: an explicit request wins, then SPLITZIP_THREADS, then the
/// hardware concurrency.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPLITZIP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end) over [0, count) split into contiguous ranges whose
/// starts are multiples of `align`. Ranges are disjoint so callers may write
/// into per-range output regions without synchronisation.
template <class Fn>
void for_each_range(std::size_t count, std::size_t align, unsigned threads, Fn&& fn) {
  constexpr std::size_t kMinPerWorker = std::size_t{1} << 15;
  if (count == 0) return;
  align = std::max<std::size_t>(align, 1);
  const std::size_t units = (count + align - 1) / align;
  std::size_t workers = std::min<std::size_t>({threads, units, count / kMinPerWorker + 1});
  if (workers <= 1) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t per = (units + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * per * align);
    const std::size_t end = std::min(count, (w + 1) * per * align);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace splitzip
