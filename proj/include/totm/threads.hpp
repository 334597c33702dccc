#pragma once

namespace totm {

/// Sets the default OpenMP team size for parallel kernels (no-op without
/// OpenMP). Results never depend on the count.
void set_thread_count(int n);
int thread_count();

}  // namespace totm
