#pragma once

#include <cstdint>
#include <functional>

namespace focalforge {

/// Work is always split into a fixed number of chunks (independent of the
/// thread count), so any reduction that combines per-chunk partials in chunk
/// order produces identical bits no matter how many workers execute it.
constexpr int kParallelChunks = 4;

int num_threads();
void set_num_threads(int n);

/// Invokes fn(chunk_index, begin, end) for contiguous chunks covering [0, n).
void parallel_chunks(std::int64_t n, const std::function<void(int, std::int64_t, std::int64_t)>& fn);

}  // namespace focalforge
