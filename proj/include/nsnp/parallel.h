#pragma once

#include <cstddef>
#include <functional>

namespace nsnp {

// Worker count used by parallel_for. Initialised from NSNP_THREADS, else 1.
std::size_t num_threads();
void set_num_threads(std::size_t n);

// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks; fn
// must only write state owned by index i so results do not depend on the
// thread count.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace nsnp
