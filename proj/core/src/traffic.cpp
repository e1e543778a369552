#include "flashcg/traffic.hpp"

namespace flashcg {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::geometry: return "geometry";
    case Stage::rbf: return "rbf";
    case Stage::filter: return "filter";
    case Stage::gather: return "gather";
    case Stage::message: return "message";
    case Stage::aggregation: return "aggregation";
    case Stage::mlp: return "mlp";
    case Stage::count: break;
  }
  return "?";
}

std::int64_t TrafficReport::total_read() const {
  std::int64_t sum = 0;
  for (const auto& s : stages) sum += s.read;
  return sum;
}

std::int64_t TrafficReport::total_write() const {
  std::int64_t sum = 0;
  for (const auto& s : stages) sum += s.write;
  return sum;
}

TrafficReport& TrafficReport::operator+=(const TrafficReport& other) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].read += other.stages[i].read;
    stages[i].write += other.stages[i].write;
  }
  atomic_updates += other.atomic_updates;
  return *this;
}

namespace {

void set(TrafficReport& r, Stage s, std::int64_t read, std::int64_t write,
         const IoShape& shape) {
  auto& b = r.stages[static_cast<int>(s)];
  b.read = read * shape.blocks * shape.width;
  b.write = write * shape.blocks * shape.width;
}

}  // namespace

// Per block, forward then backward, in scalars:
//   rbf         read  E + E(R+1)                 write E R + E
//   filter      read  E(R+2H) + E(D+3H)          write E(2H+D) + E(2H+R)
//   gather      read  E D + 2 E D                write E D + N D + E D
//   message     read  2 E D + 4 E D              write E D + 2 E D
//   aggregation read  2 E D + E D                write N D + E D + E D
//   mlp         read  6 N D + 7 N D              write 5 N D + 5 N D
// with one atomic update per scattered element (2 E D per block).
TrafficReport io_model_base(const IoShape& s) {
  const auto E = s.edges, N = s.nodes, D = s.hidden, R = s.rbf, H = s.filter_hidden;
  TrafficReport r;
  set(r, Stage::rbf, E * (R + 2), E * (R + 1), s);
  set(r, Stage::filter, E * (R + 5 * H + D), E * (4 * H + D + R), s);
  set(r, Stage::gather, 3 * E * D, 2 * E * D + N * D, s);
  set(r, Stage::message, 6 * E * D, 3 * E * D, s);
  set(r, Stage::aggregation, 3 * E * D, 2 * E * D + N * D, s);
  set(r, Stage::mlp, 13 * N * D, 10 * N * D, s);
  r.atomic_updates = 2 * E * D * s.blocks;
  return r;
}

// Per block, forward then backward, in scalars:
//   geometry    read  3N + 3E (positions) + E (d) + E (dE/dd)   write E (d) + E (dE/dd)
//   gather      read  E D (x_src) + E D (grad h_dst) + N D (x own)
//   aggregation write N D (h) + N D (grad x)
//   mlp         read  13 N D                                     write 10 N D
// The filter MLP and basis live in tile-local storage and move no bytes.
TrafficReport io_model_flash(const IoShape& s) {
  const auto E = s.edges, N = s.nodes, D = s.hidden;
  TrafficReport r;
  set(r, Stage::geometry, 3 * N + 5 * E, 2 * E, s);
  set(r, Stage::gather, 2 * E * D + N * D, 0, s);
  set(r, Stage::aggregation, 0, 2 * N * D, s);
  set(r, Stage::mlp, 13 * N * D, 10 * N * D, s);
  return r;
}

}  // namespace flashcg
