#pragma once

#include <cstddef>
#include <functional>

namespace phasekit {

/// Worker budget: an explicit override if set, else PHASEKIT_WORKERS, else
/// the number of logical cores.
std::size_t worker_count();
void set_worker_count(std::size_t workers);  // 0 restores the default

/// Runs body(i) for i in [0, count) on up to worker_count() threads. Every
/// index is visited exactly once; the first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace phasekit
