#include "flashcg/system_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "flashcg/text_config.hpp"

namespace flashcg {

namespace {

double to_double(const TextDocument& doc, const TextRow& row, std::size_t k) {
  try {
    std::size_t used = 0;
    const double v = std::stod(row.fields[k], &used);
    if (used == row.fields[k].size()) return v;
  } catch (const std::exception&) {
  }
  fail_at(doc, row.line, "expected a number, got '" + row.fields[k] + "'");
}

long long to_int(const TextDocument& doc, const TextRow& row, std::size_t k) {
  const double v = to_double(doc, row, k);
  if (v != static_cast<double>(static_cast<long long>(v)))
    fail_at(doc, row.line, "expected an integer, got '" + row.fields[k] + "'");
  return static_cast<long long>(v);
}

void expect_fields(const TextDocument& doc, const TextRow& row, std::size_t n, const char* what) {
  if (row.fields.size() != n)
    fail_at(doc, row.line, fmt::format("{} rows need {} fields, found {}", what, n, row.fields.size()));
}

}  // namespace

System read_system(const std::string& path) {
  const TextDocument doc = read_text_file(path);
  doc.reject_unknown({"system", "beads", "bonds", "native"});
  const TextSection* sys = doc.find("system");
  const TextSection* beads = doc.find("beads");
  if (!sys) throw ConfigError(path + ": missing [system] section");
  if (!beads) throw ConfigError(path + ": missing [beads] section");
  for (const auto& e : sys->entries)
    if (e.key != "beads" && e.key != "energy_unit") fail_at(doc, e.line, "unknown key '" + e.key + "'");
  if (!sys->rows.empty()) fail_at(doc, sys->rows.front().line, "unexpected data row in [system]");
  const TextEntry* count = sys->find("beads");
  if (!count) throw ConfigError(path + ": [system] needs 'beads'");
  const long long n = parse_int(doc, *count);
  if (n < 1) fail_at(doc, count->line, "beads must be >= 1");

  System s;
  if (const TextEntry* unit = sys->find("energy_unit")) s.energy_unit = unit->value;
  if (static_cast<long long>(beads->rows.size()) != n)
    throw ConfigError(fmt::format("{}: [beads] has {} rows but beads = {}", path, beads->rows.size(), n));
  for (const auto& row : beads->rows) {
    expect_fields(doc, row, 5, "[beads]");
    s.types.push_back(static_cast<int>(to_int(doc, row, 0)));
    s.masses.push_back(to_double(doc, row, 1));
    s.positions.push_back({to_double(doc, row, 2), to_double(doc, row, 3), to_double(doc, row, 4)});
  }
  if (const TextSection* bonds = doc.find("bonds")) {
    for (const auto& row : bonds->rows) {
      expect_fields(doc, row, 4, "[bonds]");
      s.bonds.push_back({static_cast<Index>(to_int(doc, row, 0)), static_cast<Index>(to_int(doc, row, 1)),
                         to_double(doc, row, 2), to_double(doc, row, 3)});
    }
  }
  if (const TextSection* native = doc.find("native")) {
    Positions<double> ref;
    for (const auto& row : native->rows) {
      expect_fields(doc, row, 3, "[native]");
      ref.push_back({to_double(doc, row, 0), to_double(doc, row, 1), to_double(doc, row, 2)});
    }
    s.native = std::move(ref);
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

void write_system(const std::string& path, const System& s) {
  s.validate();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "[system]\n" << "beads = " << s.size() << "\n" << "energy_unit = " << s.energy_unit << "\n\n";
  out << "[beads]\n# type mass x y z\n";
  for (Index i = 0; i < s.size(); ++i)
    out << fmt::format("{} {:.17g} {:.17g} {:.17g} {:.17g}\n", s.types[i], s.masses[i],
                       s.positions[i][0], s.positions[i][1], s.positions[i][2]);
  if (!s.bonds.empty()) {
    out << "\n[bonds]\n# i j k r0\n";
    for (const auto& b : s.bonds) out << fmt::format("{} {} {:.17g} {:.17g}\n", b.i, b.j, b.k, b.r0);
  }
  if (s.native) {
    out << "\n[native]\n# x y z\n";
    for (const auto& p : *s.native) out << fmt::format("{:.17g} {:.17g} {:.17g}\n", p[0], p[1], p[2]);
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_xyz_frame(std::ostream& out, const TrajectoryFrame& f) {
  out << f.positions.size() << '\n';
  out << fmt::format("step={} replica={} units=nm\n", f.step, f.replica);
  for (std::size_t i = 0; i < f.positions.size(); ++i) {
    const int type = i < f.types.size() ? f.types[i] : 0;
    out << fmt::format("B{} {:.9f} {:.9f} {:.9f}\n", type, f.positions[i][0], f.positions[i][1],
                       f.positions[i][2]);
  }
}

std::vector<TrajectoryFrame> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory '" + path + "'");
  std::vector<TrajectoryFrame> frames;
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& what) {
    throw ConfigError(path + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    long long n = 0;
    try {
      n = std::stoll(line);
    } catch (const std::exception&) {
      bad("expected a bead count");
    }
    if (n < 1) bad("bead count must be >= 1");
    TrajectoryFrame f;
    if (!std::getline(in, line)) bad("truncated frame header");
    ++lineno;
    std::istringstream comment(line);
    std::string tok;
    while (comment >> tok) {
      if (tok.rfind("step=", 0) == 0) f.step = std::stoll(tok.substr(5));
      if (tok.rfind("replica=", 0) == 0) f.replica = std::stoi(tok.substr(8));
    }
    for (long long i = 0; i < n; ++i) {
      if (!std::getline(in, line)) bad("truncated frame");
      ++lineno;
      std::istringstream row(line);
      std::string name;
      Vec3<double> p{};
      if (!(row >> name >> p[0] >> p[1] >> p[2])) bad("malformed coordinate row");
      int type = 0;
      if (name.size() > 1 && name[0] == 'B') {
        try {
          type = std::stoi(name.substr(1));
        } catch (const std::exception&) {
        }
      }
      f.types.push_back(type);
      f.positions.push_back(p);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace flashcg
