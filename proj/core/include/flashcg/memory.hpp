#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>
#include <vector>

namespace flashcg {

// Process-wide byte counters for allocations made through TrackingAllocator.
// Pipelines allocate every transient tensor through Buffer<T>, so the peak
// counter measures the transient footprint of an energy/force evaluation.
class AllocationTracker {
 public:
  static void on_allocate(std::size_t bytes) noexcept;
  static void on_deallocate(std::size_t bytes) noexcept;

  static std::int64_t current_bytes() noexcept;
  static std::int64_t peak_bytes() noexcept;
  static void reset_peak() noexcept;
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    AllocationTracker::on_allocate(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    AllocationTracker::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, TrackingAllocator<T>>;

// Measures the peak of tracked bytes above the level at construction.
class PeakMemoryScope {
 public:
  PeakMemoryScope() noexcept;
  std::int64_t peak_above_baseline() const noexcept;

 private:
  std::int64_t baseline_;
};

}  // namespace flashcg
