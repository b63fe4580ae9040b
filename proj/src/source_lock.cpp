#include "evidenceflow/source_lock.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"

namespace evidenceflow {

HolderMismatch::HolderMismatch(const std::filesystem::path& path,
                               std::string expected, std::string found)
    : Error("lock " + path.string() + " is held by '" + found + "', not '" +
            expected + "'"),
      found_(std::move(found)) {}

std::filesystem::path lock_path(const std::filesystem::path& source_root) {
  return source_root / kSourceLockName;
}

namespace {

std::string render_lock(const SourceLock& lock) {
  return "holder=" + lock.holder + "\njob_id=" + lock.job_id +
         "\nacquired_utc=" + format_iso_utc(lock.acquired_utc) + "\n";
}

AlreadyLocked parse_lock(const std::filesystem::path& path, std::string_view text) {
  AlreadyLocked info{path, {}, {}, std::nullopt};
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "holder") info.holder = value;
    else if (key == "job_id") info.job_id = value;
    else if (key == "acquired_utc") info.acquired_utc = parse_iso_utc(value);
  }
  return info;
}

}  // namespace

LockAttempt acquire_lock(const std::filesystem::path& source_root,
                         std::string_view server_id, std::string_view job_id) {
  if (!std::filesystem::is_directory(source_root))
    throw IoError("source root is not a directory", source_root);
  SourceLock lock{lock_path(source_root), std::string(server_id),
                  std::string(job_id), now_utc()};
  if (create_exclusive(lock.path, render_lock(lock))) return lock;
  if (auto held = read_lock(source_root)) return *held;
  // Released between our attempt and the read; report it as contended
  // anyway, the caller treats the source as locked this round.
  return AlreadyLocked{lock.path, {}, {}, std::nullopt};
}

std::optional<AlreadyLocked> read_lock(const std::filesystem::path& source_root) {
  const auto path = lock_path(source_root);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    throw;
  }
  return parse_lock(path, text);
}

ReleaseStatus release_lock(const SourceLock& lock) {
  const auto current = read_lock(lock.path.parent_path());
  if (!current) return ReleaseStatus::AlreadyGone;
  if (current->holder != lock.holder || current->job_id != lock.job_id)
    throw HolderMismatch(lock.path, lock.holder + "/" + lock.job_id,
                         current->holder + "/" + current->job_id);
  if (::unlink(lock.path.c_str()) != 0) {
    if (errno == ENOENT) return ReleaseStatus::AlreadyGone;
    throw IoError(std::string("cannot remove lock (") + std::strerror(errno) + ")", lock.path);
  }
  return ReleaseStatus::Released;
}

std::optional<AlreadyLocked> break_lock(const std::filesystem::path& source_root) {
  auto current = read_lock(source_root);
  if (!current) return std::nullopt;
  if (::unlink(current->path.c_str()) != 0 && errno != ENOENT)
    throw IoError(std::string("cannot remove lock (") + std::strerror(errno) + ")", current->path);
  return current;
}

}  // namespace evidenceflow
