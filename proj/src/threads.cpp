#include "totm/threads.hpp"

#include "parallel.hpp"

namespace totm {

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int thread_count() { return detail::resolve_threads(0); }

}  // namespace totm
