#pragma once

#include <cstddef>
#include <functional>

namespace fgam {

/// 0 means "all hardware threads"; the result is always >= 1.
int resolve_threads(int requested);

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work items must
/// write only to their own output slots. If any call throws, the exception
/// from the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace fgam
