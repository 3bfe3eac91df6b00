// SPDX-License-Identifier: Apache-2.0
#include "ftlab/tensor/memory.hpp"

#include <algorithm>

namespace ftlab::memory {
namespace {
thread_local std::int64_t g_live = 0;
thread_local std::int64_t g_peak = 0;
}  // namespace

std::int64_t live_bytes() { return g_live; }
std::int64_t peak_bytes() { return g_peak; }
void reset_peak() { g_peak = g_live; }

void note_alloc(std::size_t bytes) {
  g_live += static_cast<std::int64_t>(bytes);
  g_peak = std::max(g_peak, g_live);
}

void note_free(std::size_t bytes) { g_live -= static_cast<std::int64_t>(bytes); }

}  // namespace ftlab::memory
