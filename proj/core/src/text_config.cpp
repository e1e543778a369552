#include "flashcg/text_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "flashcg/types.hpp"

namespace flashcg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void fail_at(const TextDocument& doc, int line, const std::string& message) {
  throw ConfigError(doc.source + ":" + std::to_string(line) + ": " + message);
}

const TextEntry* TextSection::find(const std::string& key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

const TextSection* TextDocument::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

void TextDocument::reject_unknown(const std::vector<std::string>& allowed) const {
  for (const auto& s : sections)
    if (std::find(allowed.begin(), allowed.end(), s.name) == allowed.end())
      fail_at(*this, s.line, "unknown section [" + s.name + "]");
}

TextDocument parse_text(const std::string& text, const std::string& source) {
  TextDocument doc;
  doc.source = source;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_at(doc, line, "malformed section header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (name.empty()) fail_at(doc, line, "empty section name");
      if (doc.find(name)) fail_at(doc, line, "duplicate section [" + name + "]");
      doc.sections.push_back({name, {}, {}, line});
      continue;
    }
    if (doc.sections.empty()) doc.sections.push_back({"", {}, {}, line});
    auto& section = doc.sections.back();
    const auto eq = s.find('=');
    if (eq != std::string::npos) {
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) fail_at(doc, line, "missing key before '='");
      if (section.find(key)) fail_at(doc, line, "duplicate key '" + key + "'");
      section.entries.push_back({key, trim(s.substr(eq + 1)), line});
      continue;
    }
    TextRow row;
    row.line = line;
    std::istringstream fields(s);
    std::string f;
    while (fields >> f) row.fields.push_back(f);
    section.rows.push_back(std::move(row));
  }
  return doc;
}

TextDocument read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

long long parse_int(const TextDocument& doc, const TextEntry& e) {
  long long v = 0;
  const auto* end = e.value.data() + e.value.size();
  const auto r = std::from_chars(e.value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    fail_at(doc, e.line, "key '" + e.key + "' expects an integer, got '" + e.value + "'");
  return v;
}

double parse_double(const TextDocument& doc, const TextEntry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used == e.value.size()) return v;
  } catch (const std::exception&) {
  }
  fail_at(doc, e.line, "key '" + e.key + "' expects a number, got '" + e.value + "'");
}

bool parse_bool(const TextDocument& doc, const TextEntry& e) {
  if (e.value == "on" || e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "off" || e.value == "false" || e.value == "0" || e.value == "no") return false;
  fail_at(doc, e.line, "key '" + e.key + "' expects on/off, got '" + e.value + "'");
}

}  // namespace flashcg
