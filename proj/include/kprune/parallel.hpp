#pragma once

#include <cstddef>
#include <functional>

namespace kprune {

/// Runs fn(task) for task in [0, n_tasks) on up to `threads` workers.
/// Tasks are handed out in index order; callers that reduce results must do
/// so in task order afterwards so output never depends on `threads`.
/// The first exception thrown by any task is rethrown on the caller.
void parallel_for(std::size_t n_tasks, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Fixed row-block size for reductions. Independent of thread count.
inline constexpr std::size_t kReductionBlock = 1024;

}  // namespace kprune
