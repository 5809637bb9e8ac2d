#pragma once

#include <cstdint>
#include <functional>

namespace onfire {

// Worker count used by primitives that split work over independent items.
// Defaults to 1 so runs are bit-reproducible unless asked otherwise.
void set_num_threads(int n);
int num_threads();

// Calls fn(i) for i in [begin, end), split into contiguous chunks over the
// configured thread count. fn must only write state owned by index i.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace onfire
