#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evidenceflow {

// Line-oriented `key = value` configuration text with optional `[section]`
// headers, `#` comments and blank lines. Keys may repeat; order is kept.
struct KvEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct KvSection {
  std::string name;  // empty for entries before the first header
  std::size_t line = 0;
  std::vector<KvEntry> entries;

  const KvEntry* find(std::string_view key) const;
  std::vector<const KvEntry*> find_all(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  // Throws ConfigError naming the section line when the key is absent.
  const KvEntry& require(std::string_view key) const;
};

struct KvDocument {
  KvSection root;
  std::vector<KvSection> sections;

  std::vector<const KvSection*> sections_named(std::string_view name) const;
};

// Throws ConfigError with the offending line number.
KvDocument parse_kv_document(std::string_view text);
KvDocument load_kv_document(const std::string& path);

std::string_view trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

}  // namespace evidenceflow
