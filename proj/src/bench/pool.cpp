#include "derrt/bench/pool.hpp"

#include <cstdlib>
#include <string>

namespace derrt::bench {

std::size_t worker_count() {
  if (const char* env = std::getenv("DERRT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
#ifdef _OPENMP
  return static_cast<std::size_t>(omp_get_max_threads());
#else
  return 1;
#endif
}

}  // namespace derrt::bench
