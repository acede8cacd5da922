#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cpr {

/// Caps the number of worker threads used by parallel loops. Results never
/// depend on this value; every parallel loop writes disjoint outputs.
inline void set_thread_cap(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

inline int thread_cap() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Applies CPR_THREADS from the environment, if set.
inline void apply_thread_env() {
  if (const char* env = std::getenv("CPR_THREADS")) {
    try {
      set_thread_cap(std::stoi(env));
    } catch (const std::exception&) {
    }
  }
}

}  // namespace cpr
