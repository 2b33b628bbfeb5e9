#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "llmaudit/errors.hpp"
#include "llmaudit/text.hpp"

namespace llmaudit::kv {

/// One `[name]` block of a key-value document. Entries before the first
/// header belong to an unnamed leading section.
struct Section {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line = 0;

  [[nodiscard]] const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

/// Parses `key = value` lines grouped under optional `[section]` headers.
/// `#` starts a comment only at the beginning of a line.
inline std::vector<Section> parse(std::string_view doc, std::string_view origin = "document") {
  std::vector<Section> sections(1);
  std::size_t line_no = 0;
  std::istringstream in{std::string(doc)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw AuditError(std::string(origin) + ":" + std::to_string(line_no) + ": malformed section header");
      sections.push_back({std::string(text::trim(line.substr(1, line.size() - 2))), {}, line_no});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw AuditError(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(text::trim(line.substr(0, eq)));
    if (key.empty())
      throw AuditError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    sections.back().entries.emplace_back(std::move(key), std::string(text::trim(line.substr(eq + 1))));
  }
  return sections;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace llmaudit::kv
