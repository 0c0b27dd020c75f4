#pragma once

#include <cstdint>
#include <functional>

namespace fae {

// Process-wide worker count for data-parallel loops. Loops dispatched through
// parallel_for must write disjoint outputs and keep any accumulation inside a
// single iteration, so results are bit-identical for every worker count.
void set_worker_count(int workers);
int worker_count();

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace fae
