#pragma once

#include <cstddef>
#include <vector>

namespace kmf {

// Work is always split at fixed chunk boundaries, independent of the thread
// count, and partial results are combined in chunk order. This is what makes
// every simulation bit-reproducible under any KMF_THREADS value.
inline constexpr std::size_t kChunkSize = 2048;

// 0 selects the OpenMP default.
void set_thread_count(int threads);
int thread_count();

// Reads KMF_THREADS (unset or 0 = auto). Returns the value applied.
int configure_threads_from_env();

inline std::size_t chunk_count(std::size_t n) { return (n + kChunkSize - 1) / kChunkSize; }

// Calls body(begin, end) for every chunk, possibly concurrently.
template <typename Body>
void for_each_chunk(std::size_t n, Body&& body) {
  const auto chunks = static_cast<long long>(chunk_count(n));
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (long long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunkSize;
    const std::size_t end = begin + kChunkSize < n ? begin + kChunkSize : n;
    body(begin, end);
  }
}

// Runs body(i) for i in [0, n) with one task per index (replica-level work).
template <typename Body>
void for_each_index(std::size_t n, Body&& body) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) if (count > 1)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

// Sum of width-`width` rows term(i, out) over i in [0, n), reduced per chunk
// and then across chunks in a fixed order.
template <typename Term>
std::vector<double> chunked_sum(std::size_t n, std::size_t width, Term&& term) {
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks * width, 0.0);
  for_each_chunk(n, [&](std::size_t begin, std::size_t end) {
    double* acc = partial.data() + (begin / kChunkSize) * width;
    for (std::size_t i = begin; i < end; ++i) term(i, acc);
  });
  std::vector<double> total(width, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t w = 0; w < width; ++w) total[w] += partial[c * width + w];
  }
  return total;
}

}  // namespace kmf
