#include "cris/runtime.hpp"

#include <ATen/Parallel.h>

namespace cris {

void configure_threading(int threads) {
  if (threads < 1) return;
  at::set_num_threads(threads);
  try {
    at::set_num_interop_threads(1);
  } catch (const std::exception&) {
    // Only settable before the inter-op pool spins up; fine to skip after.
  }
}

}  // namespace cris
