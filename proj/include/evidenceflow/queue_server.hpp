#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>

#include "evidenceflow/job.hpp"
#include "evidenceflow/layout.hpp"
#include "evidenceflow/log.hpp"
#include "evidenceflow/runner.hpp"
#include "evidenceflow/server_config.hpp"

namespace evidenceflow {

struct ClaimedJob {
  JobSpec job;
  std::filesystem::path file_path;  // inside processing/
  UtcTime claimed_utc{};
  std::string claimed_by;
};

enum class OutcomeKind { Succeeded, Failed, Locked };

std::string_view to_string(OutcomeKind kind);
JobState terminal_state(OutcomeKind kind);

struct JobOutcome {
  OutcomeKind kind = OutcomeKind::Failed;
  std::string detail;
  UtcTime started_utc{};
  UtcTime finished_utc{};
};

// Moves the oldest queue/*.job into processing/ with an atomic rename. A file
// taken by a competitor is skipped; a file that does not parse is finalized
// as Failed on the spot and the next one is tried. nullopt on an empty queue.
std::optional<ClaimedJob> claim_next(const QueueLayout& layout, std::string_view server_id,
                                     Logger& log = Logger::null());

// Lock (exclusive policy), plan, run, check. The source lock is released on
// every path. Runner errors become Failed outcomes, never exceptions.
JobOutcome execute_claimed(const ClaimedJob& claimed, Runner& runner,
                           const ServerConfig& config, Logger& log = Logger::null());

// Moves the job file and its .stdout/.stderr captures into the folder for
// outcome.kind and writes the `<jobfile>.result` sidecar next to it. One
// retry on IO failure; the second failure is logged as fatal and rethrown.
std::filesystem::path finalize(const ClaimedJob& claimed, const JobOutcome& outcome,
                               const QueueLayout& layout, Logger& log = Logger::null());

// locked/ -> queue/ keeping filenames (and so FIFO position).
std::size_t requeue_locked(const QueueLayout& layout, Logger& log = Logger::null());

// processing/ -> queue/ for files left by a crash. Call at startup only.
std::size_t recover_orphans(const QueueLayout& layout, std::string_view server_id,
                            Logger& log = Logger::null());

// Resolves the runner and checks the queue layout; throws ConfigError.
void validate_server_config(const ServerConfig& config, const RunnerRegistry& registry);

struct ServeOptions {
  bool once = false;  // drain the queue, then return
};

struct ServeStats {
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t locked = 0;
  std::size_t recovered = 0;
};

// The perpetual loop. The stop token is observed between jobs and while
// idle; an in-flight job always runs to its finalize.
ServeStats serve(const ServerConfig& config, const RunnerRegistry& registry,
                 std::stop_token stop, ServeOptions options = {},
                 Logger& log = Logger::null());

// Capture/sidecar paths for a job file living in `dir`.
std::filesystem::path result_sidecar(const std::filesystem::path& job_file);
CapturePaths capture_paths(const std::filesystem::path& job_file);

struct QueueCounts {
  std::size_t queued = 0, processing = 0, succeeded = 0, failed = 0, locked = 0;
  std::optional<UtcTime> oldest_queued_created;
};

QueueCounts count_jobs(const QueueLayout& layout);

}  // namespace evidenceflow
