#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "evidenceflow/error.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

inline constexpr std::string_view kSourceLockName = ".evidence.lock";

struct SourceLock {
  std::filesystem::path path;
  std::string holder;
  std::string job_id;
  UtcTime acquired_utc{};
};

// The lock someone else holds, as read back from the existing file. Fields
// are best effort: a lock written by a foreign tool may carry none of them.
struct AlreadyLocked {
  std::filesystem::path path;
  std::string holder;
  std::string job_id;
  std::optional<UtcTime> acquired_utc;
};

using LockAttempt = std::variant<SourceLock, AlreadyLocked>;

class HolderMismatch : public Error {
 public:
  HolderMismatch(const std::filesystem::path& path, std::string expected,
                 std::string found);
  const std::string& found_holder() const noexcept { return found_; }

 private:
  std::string found_;
};

std::filesystem::path lock_path(const std::filesystem::path& source_root);

// Exclusive-create of `<source_root>/.evidence.lock`. IO failures other than
// "already exists" throw IoError.
LockAttempt acquire_lock(const std::filesystem::path& source_root,
                         std::string_view server_id, std::string_view job_id);

enum class ReleaseStatus { Released, AlreadyGone };

// Removes the lock file if it still names this holder and job. Never deletes
// another server's lock (throws HolderMismatch instead).
ReleaseStatus release_lock(const SourceLock& lock);

std::optional<AlreadyLocked> read_lock(const std::filesystem::path& source_root);

// Operator override: removes whatever lock is present. Returns the removed
// lock's description, or nullopt when the source was not locked.
std::optional<AlreadyLocked> break_lock(const std::filesystem::path& source_root);

}  // namespace evidenceflow
