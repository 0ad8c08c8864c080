#pragma once

#include <cstddef>
#include <functional>

namespace spikedet {

// Global worker count for parallel_for. 1 (the default) runs everything
// inline on the calling thread and is the bit-reproducible reference path.
void set_num_threads(int n);
int num_threads();

// Splits [0, count) into one contiguous chunk per worker and runs
// fn(begin, end) on each. Every index is processed by exactly one worker,
// so any per-index reduction keeps its sequential order and results are
// bit-identical for every thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace spikedet
