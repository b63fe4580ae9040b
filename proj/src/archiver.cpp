#include "evidenceflow/archiver.hpp"

#include <fnmatch.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <regex>

#include "evidenceflow/digest.hpp"
#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"

namespace evidenceflow {

RegistryError::RegistryError(Kind kind, std::size_t line, const std::string& message)
    : Error(line ? "registry line " + std::to_string(line) + ": " + message
                 : "registry: " + message),
      kind_(kind),
      line_(line) {}

RegistrySnapshot parse_registry(std::string_view text, UtcTime snapshot_utc) {
  RegistrySnapshot snap;
  snap.snapshot_utc = snapshot_utc;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kRegistryHeader)
        throw RegistryError(RegistryError::Kind::BadHeader, line_no,
                            "expected header 'case_id<TAB>status<TAB>status_date_utc'");
      header_seen = true;
      continue;
    }
    if (trim(line).empty()) continue;

    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3)
      throw RegistryError(RegistryError::Kind::BadRow, line_no, "expected 3 tab-separated columns");

    CaseRecord rec;
    rec.case_id = std::string(trim(cols[0]));
    if (rec.case_id.empty()) throw RegistryError(RegistryError::Kind::BadRow, line_no, "empty case_id");
    std::string status(trim(cols[1]));
    std::transform(status.begin(), status.end(), status.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    if (status == "open") rec.status = CaseStatus::Open;
    else if (status == "closed") rec.status = CaseStatus::Closed;
    else throw RegistryError(RegistryError::Kind::BadRow, line_no, "status must be open or closed");
    const auto date = parse_utc_loose(trim(cols[2]));
    if (!date)
      throw RegistryError(RegistryError::Kind::BadDate, line_no,
                          "status_date_utc '" + std::string(cols[2]) + "' is not a UTC date");
    if (*date > snapshot_utc)
      throw RegistryError(RegistryError::Kind::FutureDate, line_no, "status_date_utc is in the future");
    rec.status_date_utc = *date;
    const auto id = rec.case_id;
    if (!snap.records.emplace(id, std::move(rec)).second)
      throw RegistryError(RegistryError::Kind::DuplicateCase, line_no, "duplicate case_id '" + id + "'");
  }
  if (!header_seen) throw RegistryError(RegistryError::Kind::BadHeader, 0, "empty registry file");
  return snap;
}

RegistrySnapshot TsvCaseRegistry::snapshot(UtcTime now) {
  std::string text;
  try {
    text = read_file(path_);
  } catch (const IoError& e) {
    throw RegistryError(RegistryError::Kind::Unreadable, 0, e.what());
  }
  return parse_registry(text, now);
}

RegistrySnapshot snapshot_registry(const fs::path& registry_path, UtcTime now) {
  return TsvCaseRegistry(registry_path).snapshot(now);
}

ArchivePolicy parse_archive_config(std::string_view text) {
  const auto doc = parse_kv_document(text);
  if (!doc.sections.empty())
    throw ConfigError("archive config does not use sections", doc.sections.front().line);
  ArchivePolicy p;
  bool custom_globs = false;
  for (const auto& e : doc.root.entries) {
    if (e.key == "threshold_days") {
      try {
        std::size_t used = 0;
        p.threshold_days = std::stoi(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("threshold_days must be an integer", e.line);
      }
      if (p.threshold_days < 0) throw ConfigError("threshold_days must be >= 0", e.line);
    } else if (e.key == "archive_root") {
      p.archive_root = e.value;
    } else if (e.key == "source_root") {
      p.source_roots.emplace_back(e.value);
    } else if (e.key == "clean_glob") {
      if (!custom_globs) p.clean_globs.clear();
      custom_globs = true;
      if (!e.value.empty()) p.clean_globs.push_back(e.value);
    } else if (e.key == "case_id_pattern") {
      p.case_id_pattern = e.value;
    } else if (e.key == "registry") {
      p.registry_path = e.value;
    } else {
      throw ConfigError("unknown key '" + e.key + "'", e.line);
    }
  }
  return p;
}

ArchivePolicy load_archive_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_archive_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

bool is_within(const fs::path& inner, const fs::path& outer) {
  const auto a = fs::weakly_canonical(inner);
  const auto b = fs::weakly_canonical(outer);
  auto ai = a.begin();
  for (auto bi = b.begin(); bi != b.end(); ++bi, ++ai) {
    if (bi->empty()) continue;  // trailing separator
    if (ai == a.end() || *ai != *bi) return false;
  }
  return true;
}

}  // namespace

void validate_policy(const ArchivePolicy& policy) {
  if (policy.threshold_days < 0) throw ConfigError("threshold_days must be >= 0");
  if (policy.archive_root.empty()) throw ConfigError("archive_root is not set");
  if (policy.source_roots.empty()) throw ConfigError("no source_root configured");
  for (const auto& root : policy.source_roots)
    if (is_within(policy.archive_root, root))
      throw ConfigError("archive_root " + policy.archive_root.string() + " lies inside source_root " +
                        root.string());
  try {
    std::regex re(policy.case_id_pattern);
  } catch (const std::regex_error& e) {
    throw ConfigError("case_id_pattern does not compile: " + std::string(e.what()));
  }
}

Eligibility eligibility(std::string_view case_id, const RegistrySnapshot& snapshot,
                        const ArchivePolicy& policy, UtcTime now) {
  const auto it = snapshot.records.find(case_id);
  if (it == snapshot.records.end()) return {false, "not in registry"};
  const auto& rec = it->second;
  if (rec.status != CaseStatus::Closed) return {false, "case is open"};
  const auto closed_for = now - rec.status_date_utc;
  const auto threshold = std::chrono::days(policy.threshold_days);
  const auto closed_days =
      std::chrono::duration_cast<std::chrono::duration<double, std::ratio<86400>>>(closed_for).count();
  char days_text[32];
  std::snprintf(days_text, sizeof days_text, "%.2f", closed_days);
  if (closed_for > threshold)
    return {true, "closed " + std::string(days_text) + " days, more than " +
                      std::to_string(policy.threshold_days)};
  return {false, "closed " + std::string(days_text) + " days, not more than " +
                     std::to_string(policy.threshold_days)};
}

namespace {

std::vector<std::string_view> segments(std::string_view path) {
  std::vector<std::string_view> out;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const auto seg = path.substr(0, slash);
    if (!seg.empty()) out.push_back(seg);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return out;
}

bool match_segments(const std::vector<std::string_view>& pat, std::size_t pi,
                    const std::vector<std::string_view>& path, std::size_t si) {
  if (pi == pat.size()) return si == path.size();
  if (pat[pi] == "**") {
    for (std::size_t k = si; k <= path.size(); ++k)
      if (match_segments(pat, pi + 1, path, k)) return true;
    return false;
  }
  if (si == path.size()) return false;
  const std::string p(pat[pi]), s(path[si]);
  if (::fnmatch(p.c_str(), s.c_str(), FNM_PERIOD) != 0) return false;
  return match_segments(pat, pi + 1, path, si + 1);
}

}  // namespace

bool glob_match(std::string_view pattern, std::string_view path) {
  return match_segments(segments(pattern), 0, segments(path), 0);
}

std::string_view to_string(ArchiveAction action) {
  switch (action) {
    case ArchiveAction::Moved: return "moved";
    case ArchiveAction::WouldMove: return "would_move";
    case ArchiveAction::Untouched: return "untouched";
    case ArchiveAction::Skipped: return "skipped";
    case ArchiveAction::Error: return "error";
  }
  return "?";
}

std::size_t ArchiveReport::count(ArchiveAction action) const {
  return std::size_t(std::count_if(entries.begin(), entries.end(),
                                   [action](const auto& e) { return e.action == action; }));
}

namespace {

// Globs apply relative to the case folder and relative to each evidence
// folder directly below it (<case>/<evidence>/prep/<tool>/...).
bool clean_glob_hit(std::string_view glob, std::string_view rel) {
  if (glob_match(glob, rel)) return true;
  const auto slash = rel.find('/');
  return slash != std::string_view::npos && glob_match(glob, rel.substr(slash + 1));
}

// Paths (relative, '/'-separated) under `folder` matching any glob. A matched
// directory is listed once and its contents are not listed separately.
std::vector<std::string> find_clean_targets(const fs::path& folder,
                                            const std::vector<std::string>& globs) {
  std::vector<std::string> out;
  std::error_code ec;
  for (fs::recursive_directory_iterator it(folder, fs::directory_options::none, ec), end;
       !ec && it != end; it.increment(ec)) {
    const auto rel = fs::relative(it->path(), folder).generic_string();
    const bool hit = std::any_of(globs.begin(), globs.end(),
                                 [&](const std::string& g) { return clean_glob_hit(g, rel); });
    if (!hit) continue;
    out.push_back(rel);
    if (it->is_directory(ec) && !it->is_symlink(ec)) it.disable_recursion_pending();
  }
  if (ec) throw IoError("cannot scan case folder (" + ec.message() + ")", folder);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> find_job_files(const fs::path& folder) {
  std::vector<std::string> out;
  std::error_code ec;
  for (fs::recursive_directory_iterator it(folder, ec), end; !ec && it != end; it.increment(ec))
    if (it->path().extension() == ".job" && it->is_regular_file(ec))
      out.push_back(fs::relative(it->path(), folder).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

void copy_tree_verified(const fs::path& src, const fs::path& dst) {
  fs::create_directory(dst);
  for (fs::recursive_directory_iterator it(src), end; it != end; ++it) {
    const auto target = dst / fs::relative(it->path(), src);
    if (it->is_symlink()) {
      fs::copy_symlink(it->path(), target);
    } else if (it->is_directory()) {
      fs::create_directory(target);
    } else if (it->is_regular_file()) {
      fs::copy_file(it->path(), target);
      if (sha256_file(it->path()) != sha256_file(target))
        throw IoError("copy verification failed", target);
    }
  }
}

class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    const auto body = "pid=" + std::to_string(::getpid()) + "\nstarted_utc=" +
                      format_iso_utc(now_utc()) + "\n";
    if (!create_exclusive(path_, body))
      throw ArchiveBusy("another archive run holds " + path_.string());
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

}  // namespace

// Same-volume rename when possible, else copy with per-file digest check and
// delete the source. `force_copy` exercises the second path in tests.
void move_case_folder(const fs::path& src, const fs::path& dst, bool force_copy) {
  if (!force_copy) {
    std::error_code ec;
    fs::rename(src, dst, ec);
    if (!ec) return;
    if (ec != std::errc::cross_device_link) throw IoError("cannot move (" + ec.message() + ")", src);
  }
  try {
    copy_tree_verified(src, dst);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dst, ec);
    throw;
  }
  fs::remove_all(src);
}

ArchiveReport archive_run(const ArchivePolicy& policy, const fs::path& registry_path,
                          UtcTime now, ArchiveOptions options, Logger& log) {
  validate_policy(policy);
  ArchiveReport report;
  report.now = now;
  report.dry_run = options.dry_run;

  std::optional<RunLock> run_lock;
  if (!options.dry_run) {
    fs::create_directories(policy.archive_root);
    run_lock.emplace(policy.archive_root / ".archive.lock");
  }
  const auto snapshot = snapshot_registry(registry_path, now);
  const std::regex case_re(policy.case_id_pattern);

  for (const auto& root : policy.source_roots) {
    std::vector<fs::path> folders;
    std::error_code ec;
    for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec))
      if (it->is_directory(ec) && !it->is_symlink(ec)) folders.push_back(it->path());
    if (ec) throw IoError("cannot list source root (" + ec.message() + ")", root);
    std::sort(folders.begin(), folders.end());

    for (const auto& folder : folders) {
      ArchiveEntry entry;
      entry.folder = folder;
      const auto name = folder.filename().string();
      if (!std::regex_match(name, case_re)) {
        entry.action = ArchiveAction::Skipped;
        entry.reason = "not a case folder";
        report.entries.push_back(std::move(entry));
        continue;
      }
      entry.case_id = name;
      const auto verdict = eligibility(name, snapshot, policy, now);
      entry.reason = verdict.reason;
      if (!verdict.eligible) {
        entry.action = ArchiveAction::Untouched;
        report.entries.push_back(std::move(entry));
        continue;
      }
      for (const auto& job : find_job_files(folder))
        entry.warnings.push_back("job file under case folder: " + job);

      const auto target = policy.archive_root / name;
      std::error_code exists_ec;
      if (fs::exists(target, exists_ec)) {
        entry.action = ArchiveAction::Error;
        entry.reason = "name collision: " + target.string() + " already exists";
        report.entries.push_back(std::move(entry));
        continue;
      }
      try {
        entry.cleaned = find_clean_targets(folder, policy.clean_globs);
      } catch (const std::exception& e) {
        entry.action = ArchiveAction::Error;
        entry.reason = e.what();
        report.entries.push_back(std::move(entry));
        continue;
      }
      if (options.dry_run) {
        entry.action = ArchiveAction::WouldMove;
        report.entries.push_back(std::move(entry));
        continue;
      }

      std::size_t removed = 0;
      try {
        for (const auto& rel : entry.cleaned) {
          fs::remove_all(folder / rel);
          ++removed;
        }
      } catch (const std::exception& e) {
        entry.action = ArchiveAction::Error;
        entry.partially_cleaned = removed > 0;
        entry.reason = std::string("clean failed: ") + e.what();
        log.log(LogLevel::Error, "archive", name, entry.reason);
        report.entries.push_back(std::move(entry));
        continue;
      }
      try {
        move_case_folder(folder, target, false);
        entry.action = ArchiveAction::Moved;
        log.log(LogLevel::Info, "archive", name, "moved to " + target.string());
      } catch (const std::exception& e) {
        entry.action = ArchiveAction::Error;
        entry.reason = std::string("move failed: ") + e.what();
        log.log(LogLevel::Error, "archive", name, entry.reason);
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

std::string render_archive_report(const ArchiveReport& r) {
  std::string out;
  const auto put = [&out](const std::string& k, std::string v) {
    for (auto& c : v)
      if (c == '\n' || c == '\r') c = ' ';
    out += k + "=" + v + "\n";
  };
  put("version", "1");
  put("now_utc", format_iso_utc(r.now));
  put("dry_run", r.dry_run ? "true" : "false");
  put("moved", std::to_string(r.count(ArchiveAction::Moved)));
  put("would_move", std::to_string(r.count(ArchiveAction::WouldMove)));
  put("errors", std::to_string(r.count(ArchiveAction::Error)));
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    const auto p = "case." + std::to_string(i + 1) + ".";
    put(p + "folder", e.folder.string());
    if (!e.case_id.empty()) put(p + "case_id", e.case_id);
    put(p + "action", std::string(to_string(e.action)));
    put(p + "reason", e.reason);
    for (const auto& c : e.cleaned) put(p + "clean", c);
    for (const auto& w : e.warnings) put(p + "warning", w);
    if (e.partially_cleaned) put(p + "partially_cleaned", "true");
  }
  return out;
}

}  // namespace evidenceflow
