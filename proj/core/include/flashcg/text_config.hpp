#pragma once

#include <optional>
#include <string>
#include <vector>

namespace flashcg {

// Flat sectioned text: "[section]" headers, "key = value" lines and
// whitespace-separated data rows. '#' starts a comment.
struct TextEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct TextRow {
  std::vector<std::string> fields;
  int line = 0;
};

struct TextSection {
  std::string name;
  std::vector<TextEntry> entries;
  std::vector<TextRow> rows;
  int line = 0;

  const TextEntry* find(const std::string& key) const;
};

struct TextDocument {
  std::string source;  // file name, for messages
  std::vector<TextSection> sections;

  const TextSection* find(const std::string& name) const;
  // Throws ConfigError "<source>:<line>: ..." for keys/sections not in the lists.
  void reject_unknown(const std::vector<std::string>& sections) const;
};

TextDocument parse_text(const std::string& text, const std::string& source);
TextDocument read_text_file(const std::string& path);

// Value conversions that report "<source>:<line>: key 'k' ..." on failure.
long long parse_int(const TextDocument& doc, const TextEntry& e);
double parse_double(const TextDocument& doc, const TextEntry& e);
bool parse_bool(const TextDocument& doc, const TextEntry& e);

[[noreturn]] void fail_at(const TextDocument& doc, int line, const std::string& message);

}  // namespace flashcg
