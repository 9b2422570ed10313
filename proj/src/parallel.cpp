#include "kmf/parallel.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kmf {

namespace {
#ifdef _OPENMP
const int kDefaultThreads = omp_get_max_threads();
#endif
}  // namespace

void set_thread_count(int threads) {
  if (threads < 0) throw std::invalid_argument("thread count must be >= 0");
#ifdef _OPENMP
  omp_set_num_threads(threads == 0 ? kDefaultThreads : threads);
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads_from_env() {
  const char* raw = std::getenv("KMF_THREADS");
  int threads = 0;
  if (raw != nullptr && *raw != '\0') {
    try {
      threads = std::stoi(raw);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("KMF_THREADS is not an integer: ") + raw);
    }
  }
  set_thread_count(threads);
  return threads;
}

}  // namespace kmf
