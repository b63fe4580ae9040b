#include "evidenceflow/kvtext.hpp"

#include <fstream>
#include <sstream>

#include "evidenceflow/error.hpp"

namespace evidenceflow {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  while (true) {
    const auto pos = s.find(sep);
    const auto item = trim(s.substr(0, pos));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

const KvEntry* KvSection::find(std::string_view key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

std::vector<const KvEntry*> KvSection::find_all(std::string_view key) const {
  std::vector<const KvEntry*> out;
  for (const auto& e : entries)
    if (e.key == key) out.push_back(&e);
  return out;
}

std::optional<std::string> KvSection::get(std::string_view key) const {
  if (const auto* e = find(key)) return e->value;
  return std::nullopt;
}

const KvEntry& KvSection::require(std::string_view key) const {
  if (const auto* e = find(key)) return *e;
  const std::string where = name.empty() ? "" : " in [" + name + "] section";
  throw ConfigError("missing required key '" + std::string(key) + "'" + where,
                    line);
}

std::vector<const KvSection*> KvDocument::sections_named(
    std::string_view name) const {
  std::vector<const KvSection*> out;
  for (const auto& s : sections)
    if (s.name == name) out.push_back(&s);
  return out;
}

KvDocument parse_kv_document(std::string_view text) {
  KvDocument doc;
  KvSection* current = &doc.root;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;

    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("malformed section header", line_no);
      doc.sections.push_back(
          {std::string(trim(line.substr(1, line.size() - 2))), line_no, {}});
      current = &doc.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("expected key=value", line_no);
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key", line_no);
    current->entries.push_back(
        {std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return doc;
}

KvDocument load_kv_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_document(ss.str());
}

}  // namespace evidenceflow
