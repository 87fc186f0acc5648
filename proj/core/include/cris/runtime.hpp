#pragma once

namespace cris {

/// Pins torch intra-op (and, when still possible, inter-op) threading.
/// Single-threaded execution is what makes training runs bit-reproducible;
/// call once near startup. Values < 1 leave the torch defaults in place.
void configure_threading(int threads);

}  // namespace cris
