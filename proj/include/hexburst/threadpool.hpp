#pragma once

#include <cstdint>
#include <functional>

namespace hexburst {

// Bounds all internal parallelism. 0 restores the hardware default.
void set_num_threads(int n);
int num_threads();

// Runs fn over contiguous sub-ranges of [0, n). Every index is processed by
// exactly one call, so results are independent of the thread count as long as
// distinct indices write distinct outputs.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace hexburst
