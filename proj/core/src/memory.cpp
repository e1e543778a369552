#include "flashcg/memory.hpp"

namespace flashcg {

namespace {
std::atomic<std::int64_t> g_current{0};
std::atomic<std::int64_t> g_peak{0};
}  // namespace

void AllocationTracker::on_allocate(std::size_t bytes) noexcept {
  const auto now = g_current.fetch_add(static_cast<std::int64_t>(bytes)) +
                   static_cast<std::int64_t>(bytes);
  auto peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void AllocationTracker::on_deallocate(std::size_t bytes) noexcept {
  g_current.fetch_sub(static_cast<std::int64_t>(bytes));
}

std::int64_t AllocationTracker::current_bytes() noexcept {
  return g_current.load();
}

std::int64_t AllocationTracker::peak_bytes() noexcept { return g_peak.load(); }

void AllocationTracker::reset_peak() noexcept { g_peak.store(g_current.load()); }

PeakMemoryScope::PeakMemoryScope() noexcept
    : baseline_(AllocationTracker::current_bytes()) {
  AllocationTracker::reset_peak();
}

std::int64_t PeakMemoryScope::peak_above_baseline() const noexcept {
  return AllocationTracker::peak_bytes() - baseline_;
}

}  // namespace flashcg
