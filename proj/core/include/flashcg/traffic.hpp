#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace flashcg {

enum class Stage : int {
  geometry = 0,
  rbf,
  filter,
  gather,
  message,
  aggregation,
  mlp,
  count
};

std::string_view stage_name(Stage s);

// Modeled bytes a bandwidth-bound device would move between main memory and
// the compute units, per stage, for the interaction blocks of one evaluation
// (forward and backward). Per-step work outside the blocks is not counted.
struct TrafficReport {
  struct Bytes {
    std::int64_t read = 0;
    std::int64_t write = 0;
    bool operator==(const Bytes&) const = default;
  };

  std::array<Bytes, static_cast<int>(Stage::count)> stages{};
  std::int64_t atomic_updates = 0;

  void read(Stage s, std::int64_t elements, int width) {
    stages[static_cast<int>(s)].read += elements * width;
  }
  void write(Stage s, std::int64_t elements, int width) {
    stages[static_cast<int>(s)].write += elements * width;
  }
  const Bytes& at(Stage s) const { return stages[static_cast<int>(s)]; }

  std::int64_t total_read() const;
  std::int64_t total_write() const;
  std::int64_t total() const { return total_read() + total_write(); }

  TrafficReport& operator+=(const TrafficReport& other);
  bool operator==(const TrafficReport&) const = default;
};

struct IoShape {
  std::int64_t nodes = 0;          // N
  std::int64_t edges = 0;          // E
  std::int64_t hidden = 128;       // D
  std::int64_t rbf = 64;           // D_r
  std::int64_t filter_hidden = 128;
  std::int64_t blocks = 3;         // T
  int width = 4;                   // bytes per scalar
};

// Closed-form per-stage traffic of the materializing scatter-add pipeline,
// in scalars per block (times T * width):
//   E (4 D_r + 3 + 9 H + 2 D) + 19 E D + 25 N D
// i.e. Theta(T E (D_r + D)) + Theta(T E D).
TrafficReport io_model_base(const IoShape& shape);

// Closed-form traffic of the fused, segment-reduced pipeline, per block:
//   7 E + 2 E D + 26 N D + 3 N
// i.e. Theta(T (E D + N D)).
TrafficReport io_model_flash(const IoShape& shape);

}  // namespace flashcg
