#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace evidenceflow {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

// Writes to a hidden temporary sibling and renames over `path`, so readers
// only ever observe the complete contents.
void write_file_atomic(const fs::path& path, std::string_view contents);

// Creates `path` holding `contents` only if nothing exists there yet.
// The file is fully written before it becomes visible. Returns false if
// `path` already exists; throws IoError on any other failure.
bool create_exclusive(const fs::path& path, std::string_view contents);

// Regular files in `dir` whose names end with `suffix` and do not start
// with '.', sorted by filename (byte order).
std::vector<fs::path> list_sorted(const fs::path& dir, std::string_view suffix);

// rename(2) that fails instead of replacing an existing destination.
// Returns false when `from` vanished (lost race) or `to` exists.
bool rename_no_replace(const fs::path& from, const fs::path& to);

}  // namespace evidenceflow
