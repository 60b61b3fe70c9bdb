// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace storshare::par {

/// Fixed chunk size for day-indexed loops. Chunk boundaries never depend on
/// the worker count, so partial results can be folded in chunk order and the
/// final value is identical for any --threads setting.
inline constexpr std::size_t kChunk = 8192;

inline unsigned& thread_cap_ref() {
  static unsigned cap = std::thread::hardware_concurrency() ? std::thread::hardware_concurrency() : 1;
  return cap;
}

inline void set_max_threads(unsigned n) { thread_cap_ref() = n == 0 ? 1 : n; }
inline unsigned max_threads() { return thread_cap_ref(); }

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunk) {
  return n == 0 ? 0 : (n - 1) / chunk + 1;
}

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, Fn&& fn) {
  const std::size_t chunks = chunk_count(n, chunk);
  if (chunks == 0) return;
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(max_threads(), chunks));
  if (workers <= 1) {
    for (std::size_t ci = 0; ci < chunks; ++ci) {
      fn(ci, ci * chunk, std::min(n, (ci + 1) * chunk));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t ci = next.fetch_add(1);
      if (ci >= chunks) return;
      try {
        fn(ci, ci * chunk, std::min(n, (ci + 1) * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Chunked reduction: per_chunk(begin, end) -> T, folded left-to-right in
/// chunk order. Deterministic for non-associative (floating point) folds.
template <class T, class PerChunk, class Fold>
T reduce_chunks(std::size_t n, std::size_t chunk, T init, PerChunk&& per_chunk, Fold&& fold) {
  const std::size_t chunks = chunk_count(n, chunk);
  std::vector<T> parts(chunks, init);
  for_each_chunk(n, chunk, [&](std::size_t ci, std::size_t b, std::size_t e) {
    parts[ci] = per_chunk(b, e);
  });
  T out = init;
  for (const T& p : parts) out = fold(out, p);
  return out;
}

/// Deterministic mean of fn(day) over [0, n).
template <class Fn>
double mean_over(std::size_t n, Fn&& fn) {
  if (n == 0) return 0.0;
  const double sum = reduce_chunks<double>(
      n, kChunk, 0.0,
      [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += fn(i);
        return s;
      },
      [](double a, double b) { return a + b; });
  return sum / static_cast<double>(n);
}

}  // namespace storshare::par
