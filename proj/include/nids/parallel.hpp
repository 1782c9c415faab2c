#pragma once

#include <cstddef>
#include <functional>

namespace nids {

/// Worker cap: value set by set_thread_count(), else NIDS_THREADS, else the
/// hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Each index is processed exactly once; results
/// must be written to per-index slots so output does not depend on scheduling.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace nids
