#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace biascorrect {

/// Work granularity for every parallel loop and reduction. Fixed so that
/// partial sums are identical regardless of thread count.
inline constexpr std::size_t kChunkSize = 4096;

/// Resolves a requested thread count; 0 means all available cores.
inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(begin, end) on fixed-size chunks of [0, n), chunk c on thread
/// c % threads. Exceptions from workers are rethrown on the caller.
template <typename Body>
void parallel_chunks(std::size_t n, unsigned threads, Body&& body) {
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(chunks, 1)));
  auto run = [&](unsigned w) {
    for (std::size_t c = w; c < chunks; c += workers) {
      body(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
    }
  };
  if (workers <= 1) {
    run(0);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        run(w);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  parallel_chunks(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) body(i);
  });
}

/// Sums `width` accumulators over [0, n). chunk_fn(begin, end, acc) adds the
/// chunk's contribution into acc (length width, zero-initialised). Chunk
/// partials are combined by a pairwise tree in chunk order, so the result is
/// bitwise independent of the thread count.
template <typename ChunkFn>
std::vector<double> deterministic_sums(std::size_t n, std::size_t width, unsigned threads,
                                       ChunkFn&& chunk_fn) {
  const std::size_t chunks = std::max<std::size_t>(1, (n + kChunkSize - 1) / kChunkSize);
  std::vector<double> partial(chunks * width, 0.0);
  parallel_chunks(n, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    chunk_fn(b, e, &partial[c * width]);
  });
  for (std::size_t stride = 1; stride < chunks; stride *= 2) {
    for (std::size_t c = 0; c + stride < chunks; c += 2 * stride) {
      for (std::size_t w = 0; w < width; ++w) {
        partial[c * width + w] += partial[(c + stride) * width + w];
      }
    }
  }
  return {partial.begin(), partial.begin() + static_cast<std::ptrdiff_t>(width)};
}

template <typename Term>
double deterministic_sum(std::size_t n, unsigned threads, Term&& term) {
  return deterministic_sums(n, 1, threads,
                            [&](std::size_t b, std::size_t e, double* acc) {
                              double s = 0.0;
                              for (std::size_t i = b; i < e; ++i) s += term(i);
                              acc[0] += s;
                            })[0];
}

}  // namespace biascorrect
