#pragma once

namespace facefuse {

// Reads FACEFUSE_THREADS (positive integer) and caps worker threads used by
// the linear-algebra kernels. Returns the thread count in effect.
int configure_threads();
void set_threads(int count);
int thread_count();

}  // namespace facefuse
