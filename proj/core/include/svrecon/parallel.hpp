#pragma once

#include <cstddef>
#include <functional>

namespace svr {

/// Worker count from SVRECON_THREADS, else hardware concurrency (at least 1).
int default_threads();

/// Runs fn(block) for block in [0, blocks) on up to `threads` workers.
/// Blocks are claimed dynamically; callers that need deterministic results
/// write per-block outputs and reduce them in block order afterwards.
void parallel_for_blocks(std::size_t blocks, int threads,
                         const std::function<void(std::size_t)>& fn);

}  // namespace svr
