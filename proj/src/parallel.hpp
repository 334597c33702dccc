#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace totm::detail {

inline int resolve_threads(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

}  // namespace totm::detail
