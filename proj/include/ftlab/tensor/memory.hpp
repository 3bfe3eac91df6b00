// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

// Allocation accounting for tensor storage. Counters are per thread, which
// matches the one-run-per-worker model: a run's numbers are not polluted by
// runs on other threads.
namespace ftlab::memory {

/// Bytes held by live tensor buffers (data, gradients, optimizer state).
std::int64_t live_bytes();

/// Peak of live_bytes() since the last reset_peak().
std::int64_t peak_bytes();

/// Restarts peak tracking from the current live total.
void reset_peak();

void note_alloc(std::size_t bytes);
void note_free(std::size_t bytes);

}  // namespace ftlab::memory
