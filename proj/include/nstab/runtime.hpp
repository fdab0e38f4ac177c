#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nstab {

/// Keeps freed buffers in the process heap instead of returning them to the OS. Training
/// allocates and frees the same multi-megabyte activations every step, and fresh pages are
/// expensive to fault in on some hosts. Call once at program start; a no-op off glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace nstab
