#pragma once

#include <cstddef>
#include <functional>

namespace ste {

/// Number of worker threads used by parallel_for. Zero selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once, so results
/// written per index do not depend on scheduling. If several indices throw, the
/// exception from the lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ste
