#pragma once

#include <cstddef>
#include <functional>

namespace nexel {

// Worker count used by parallel loops. Resolution order: NEXEL_THREADS
// environment variable (clamped to >= 1), else hardware concurrency.
int worker_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the worker
// count, so any reduction that merges per-chunk results in chunk order is
// bit-stable across worker counts. fn must not touch state shared with other
// chunks except through its own chunk slot.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// Convenience: one chunk per index block of size ceil(n/workers) is NOT used
// anywhere; all loops go through parallel_chunks with caller-pinned sizes.

} // namespace nexel
