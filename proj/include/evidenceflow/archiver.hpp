#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evidenceflow/error.hpp"
#include "evidenceflow/log.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

enum class CaseStatus { Open, Closed };

struct CaseRecord {
  std::string case_id;
  CaseStatus status = CaseStatus::Open;
  UtcTime status_date_utc{};
};

// Immutable in-memory copy of the case registry taken at snapshot_utc.
struct RegistrySnapshot {
  std::map<std::string, CaseRecord, std::less<>> records;
  UtcTime snapshot_utc{};
};

class RegistryError : public Error {
 public:
  enum class Kind { BadHeader, DuplicateCase, BadRow, BadDate, FutureDate, Unreadable };
  RegistryError(Kind kind, std::size_t line, const std::string& message);
  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

inline constexpr std::string_view kRegistryHeader = "case_id\tstatus\tstatus_date_utc";

// Tab-separated registry: the header above, then `case_id status date` rows.
// Dates are YYYY-MM-DDThh:mm:ssZ or YYYY-MM-DD. Rows dated after
// `snapshot_utc` are rejected.
RegistrySnapshot parse_registry(std::string_view text, UtcTime snapshot_utc);

// Datastore seam: the TSV file stands in for the real registration system.
class CaseRegistry {
 public:
  virtual ~CaseRegistry() = default;
  virtual RegistrySnapshot snapshot(UtcTime now) = 0;
};

class TsvCaseRegistry : public CaseRegistry {
 public:
  explicit TsvCaseRegistry(std::filesystem::path path) : path_(std::move(path)) {}
  RegistrySnapshot snapshot(UtcTime now) override;

 private:
  std::filesystem::path path_;
};

RegistrySnapshot snapshot_registry(const std::filesystem::path& registry_path,
                                   UtcTime now = now_utc());

struct ArchivePolicy {
  int threshold_days = 30;
  std::filesystem::path archive_root;
  std::vector<std::filesystem::path> source_roots;
  std::vector<std::string> clean_globs{"prep/*/tmp/**", "**/*.cache"};
  std::string case_id_pattern = R"([A-Za-z0-9][A-Za-z0-9_.-]*)";
  std::filesystem::path registry_path;
};

// Flat key=value file: threshold_days, archive_root, registry, case_id_pattern,
// and repeatable source_root / clean_glob keys (any clean_glob replaces the
// defaults).
ArchivePolicy parse_archive_config(std::string_view text);
ArchivePolicy load_archive_config(const std::filesystem::path& path);

// threshold_days >= 0, roots set, archive_root outside every source root,
// pattern compiles. Throws ConfigError.
void validate_policy(const ArchivePolicy& policy);

struct Eligibility {
  bool eligible = false;
  std::string reason;
};

// Eligible iff the case is in the snapshot, closed, and closed for strictly
// more than threshold_days at `now`.
Eligibility eligibility(std::string_view case_id, const RegistrySnapshot& snapshot,
                        const ArchivePolicy& policy, UtcTime now);

// `*` and `?` and `[..]` within one path segment, `**` across any number of
// segments (including none). Paths use '/' separators.
bool glob_match(std::string_view pattern, std::string_view path);

enum class ArchiveAction { Moved, WouldMove, Untouched, Skipped, Error };
std::string_view to_string(ArchiveAction action);

struct ArchiveEntry {
  std::filesystem::path folder;
  std::string case_id;
  ArchiveAction action = ArchiveAction::Untouched;
  std::string reason;
  std::vector<std::string> cleaned;  // relative paths removed (or to remove)
  std::vector<std::string> warnings;
  bool partially_cleaned = false;
};

struct ArchiveReport {
  UtcTime now{};
  bool dry_run = false;
  std::vector<ArchiveEntry> entries;

  std::size_t count(ArchiveAction action) const;
};

class ArchiveBusy : public Error {
 public:
  using Error::Error;
};

struct ArchiveOptions {
  bool dry_run = false;
};

ArchiveReport archive_run(const ArchivePolicy& policy, const std::filesystem::path& registry_path,
                          UtcTime now, ArchiveOptions options = {},
                          Logger& log = Logger::null());

// Same-volume rename, falling back to copy + per-file digest check + delete
// across volumes. `force_copy` skips the rename attempt.
void move_case_folder(const std::filesystem::path& src, const std::filesystem::path& dst,
                      bool force_copy = false);

std::string render_archive_report(const ArchiveReport& report);

}  // namespace evidenceflow
