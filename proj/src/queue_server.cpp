#include "evidenceflow/queue_server.hpp"

#include <signal.h>
#include <sys/stat.h>
#include <unistd.h>

#include <condition_variable>
#include <mutex>
#include <thread>

#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"
#include "evidenceflow/source_lock.hpp"

namespace evidenceflow {

namespace {

// Unowned files in processing/ (crash between claim and marker) are only
// recovered once they have sat there this long.
constexpr auto kUnmarkedOrphanGrace = std::chrono::seconds(60);

std::string one_line(std::string_view text) {
  std::string out(text);
  for (auto& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

std::string host_name() {
  char buf[256] = {};
  if (::gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

fs::path claim_marker(const fs::path& job_file) {
  return job_file.parent_path() / (job_file.filename().native() + ".claim");
}

void write_claim_marker(const fs::path& job_file, std::string_view server_id, UtcTime when) {
  const std::string text = "server_id=" + std::string(server_id) +
                           "\npid=" + std::to_string(::getpid()) +
                           "\nhost=" + host_name() +
                           "\nclaimed_utc=" + format_iso_utc(when) + "\n";
  write_file_atomic(claim_marker(job_file), text);
}

struct ClaimOwner {
  std::string server_id, host;
  long pid = 0;
};

std::optional<ClaimOwner> read_claim_marker(const fs::path& job_file) {
  std::string text;
  try {
    text = read_file(claim_marker(job_file));
  } catch (const IoError&) {
    return std::nullopt;
  }
  ClaimOwner owner;
  const auto doc = parse_kv_document(text);
  owner.server_id = doc.root.get("server_id").value_or("");
  owner.host = doc.root.get("host").value_or("");
  try {
    owner.pid = std::stol(doc.root.get("pid").value_or("0"));
  } catch (const std::exception&) {
    owner.pid = 0;
  }
  return owner;
}

bool owner_alive(const ClaimOwner& owner) {
  if (owner.host != host_name() || owner.pid <= 0) return false;
  if (owner.pid == ::getpid()) return false;
  return ::kill(static_cast<pid_t>(owner.pid), 0) == 0 || errno == EPERM;
}

void move_if_present(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  if (!fs::exists(from, ec)) return;
  fs::rename(from, to, ec);
  if (ec) throw IoError("cannot move (" + ec.message() + ")", from);
}

std::string render_result(const ClaimedJob& claimed, const JobOutcome& outcome) {
  std::string out;
  const auto put = [&out](std::string_view k, std::string_view v) {
    out.append(k).append("=").append(one_line(v)).append("\n");
  };
  put("job_id", claimed.job.job_id);
  put("outcome", to_string(outcome.kind));
  put("detail", outcome.detail);
  put("server_id", claimed.claimed_by);
  put("claimed_utc", format_iso_utc(claimed.claimed_utc));
  put("started_utc", format_iso_utc(outcome.started_utc));
  put("finished_utc", format_iso_utc(outcome.finished_utc));
  return out;
}

// Releases a held source lock on scope exit, whatever happened to the job.
class LockGuard {
 public:
  LockGuard(std::optional<SourceLock> lock, Logger& log, std::string_view server,
            std::string_view job)
      : lock_(std::move(lock)), log_(log), server_(server), job_(job) {}
  ~LockGuard() {
    if (!lock_) return;
    try {
      if (release_lock(*lock_) == ReleaseStatus::AlreadyGone)
        log_.log(LogLevel::Warn, server_, job_, "lock_already_gone " + lock_->path.string());
      else
        log_.log(LogLevel::Debug, server_, job_, "lock_released " + lock_->path.string());
    } catch (const std::exception& e) {
      log_.log(LogLevel::Error, server_, job_, std::string("lock_release_failed ") + e.what());
    }
  }
  LockGuard(const LockGuard&) = delete;
  LockGuard& operator=(const LockGuard&) = delete;

 private:
  std::optional<SourceLock> lock_;
  Logger& log_;
  std::string server_, job_;
};

}  // namespace

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Succeeded: return "succeeded";
    case OutcomeKind::Failed: return "failed";
    case OutcomeKind::Locked: return "locked";
  }
  return "?";
}

JobState terminal_state(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Succeeded: return JobState::Succeeded;
    case OutcomeKind::Failed: return JobState::Failed;
    case OutcomeKind::Locked: return JobState::Locked;
  }
  return JobState::Failed;
}

fs::path result_sidecar(const fs::path& job_file) {
  return job_file.parent_path() / (job_file.filename().native() + ".result");
}

CapturePaths capture_paths(const fs::path& job_file) {
  const auto base = job_file.filename().native();
  return {job_file.parent_path() / (base + ".stdout"),
          job_file.parent_path() / (base + ".stderr")};
}

std::optional<ClaimedJob> claim_next(const QueueLayout& layout, std::string_view server_id,
                                     Logger& log) {
  for (const auto& file : list_sorted(layout.queue(), ".job")) {
    const auto dest = layout.processing() / file.filename();
    if (!rename_no_replace(file, dest)) continue;  // a competitor got it

    ClaimedJob claimed;
    claimed.file_path = dest;
    claimed.claimed_utc = now_utc();
    claimed.claimed_by = std::string(server_id);
    write_claim_marker(dest, server_id, claimed.claimed_utc);
    try {
      claimed.job = parse_job_file(read_file(dest));
      log.log(LogLevel::Info, server_id, claimed.job.job_id, "claimed " + file.filename().string());
      return claimed;
    } catch (const Error& e) {
      log.log(LogLevel::Warn, server_id, "-",
              "malformed_job " + file.filename().string() + ": " + e.what());
      const JobOutcome outcome{OutcomeKind::Failed, std::string("parse error: ") + e.what(),
                               claimed.claimed_utc, now_utc()};
      finalize(claimed, outcome, layout, log);
    }
  }
  return std::nullopt;
}

JobOutcome execute_claimed(const ClaimedJob& claimed, Runner& runner,
                           const ServerConfig& config, Logger& log) {
  const auto& job = claimed.job;
  JobOutcome outcome;
  outcome.started_utc = now_utc();

  std::optional<SourceLock> held;
  if (config.lock_policy == LockPolicy::Exclusive) {
    const auto root = job.source_root.empty() ? job.source.parent_path() : job.source_root;
    try {
      auto attempt = acquire_lock(root, config.server_id, job.job_id);
      if (auto* other = std::get_if<AlreadyLocked>(&attempt)) {
        outcome.kind = OutcomeKind::Locked;
        outcome.detail = "source locked by " + (other->holder.empty() ? "unknown" : other->holder) +
                         (other->job_id.empty() ? "" : " (job " + other->job_id + ")");
        outcome.finished_utc = now_utc();
        log.log(LogLevel::Info, config.server_id, job.job_id, "source_locked " + root.string());
        return outcome;
      }
      held = std::get<SourceLock>(std::move(attempt));
      log.log(LogLevel::Debug, config.server_id, job.job_id, "lock_acquired " + root.string());
    } catch (const std::exception& e) {
      outcome.kind = OutcomeKind::Failed;
      outcome.detail = std::string("lock error: ") + e.what();
      outcome.finished_utc = now_utc();
      return outcome;
    }
  }
  LockGuard guard(std::move(held), log, config.server_id, job.job_id);

  try {
    const auto plan = runner.plan(job, config.runner_settings);
    log.log(LogLevel::Info, config.server_id, job.job_id, "started " + plan.argv.front());
    const auto record = runner.execute(plan, capture_paths(claimed.file_path));
    const auto verdict = runner.check_result(job, record, config.runner_settings);
    outcome.kind = verdict.succeeded ? OutcomeKind::Succeeded : OutcomeKind::Failed;
    outcome.detail = verdict.detail;
  } catch (const std::exception& e) {
    outcome.kind = OutcomeKind::Failed;
    outcome.detail = e.what();
  }
  outcome.finished_utc = now_utc();
  log.log(outcome.kind == OutcomeKind::Succeeded ? LogLevel::Info : LogLevel::Warn,
          config.server_id, job.job_id,
          std::string(to_string(outcome.kind)) + " " + one_line(outcome.detail));
  return outcome;
}

fs::path finalize(const ClaimedJob& claimed, const JobOutcome& outcome,
                  const QueueLayout& layout, Logger& log) {
  const auto dir = layout.dir(terminal_state(outcome.kind));
  const auto target = dir / claimed.file_path.filename();
  const auto from_caps = capture_paths(claimed.file_path);
  const auto to_caps = capture_paths(target);

  for (int attempt = 1;; ++attempt) {
    try {
      move_if_present(from_caps.stdout_path, to_caps.stdout_path);
      move_if_present(from_caps.stderr_path, to_caps.stderr_path);
      write_file_atomic(result_sidecar(target), render_result(claimed, outcome));
      if (!rename_no_replace(claimed.file_path, target)) {
        std::error_code ec;
        if (!(fs::exists(target, ec) && !fs::exists(claimed.file_path, ec)))
          throw IoError("cannot move job file to " + std::string(folder_name(terminal_state(outcome.kind))),
                        claimed.file_path);
      }
      std::error_code ec;
      fs::remove(claim_marker(claimed.file_path), ec);
      log.log(LogLevel::Info, claimed.claimed_by, claimed.job.job_id,
              "finalized " + std::string(folder_name(terminal_state(outcome.kind))));
      return target;
    } catch (const std::exception& e) {
      if (attempt >= 2) {
        log.log(LogLevel::Fatal, claimed.claimed_by, claimed.job.job_id,
                std::string("finalize_failed ") + e.what());
        throw;
      }
      log.log(LogLevel::Warn, claimed.claimed_by, claimed.job.job_id,
              std::string("finalize_retry ") + e.what());
    }
  }
}

std::size_t requeue_locked(const QueueLayout& layout, Logger& log) {
  std::size_t moved = 0;
  for (const auto& file : list_sorted(layout.locked(), ".job")) {
    if (!rename_no_replace(file, layout.queue() / file.filename())) continue;
    std::error_code ec;
    // The old outcome no longer describes the job.
    fs::remove(result_sidecar(file), ec);
    fs::remove(capture_paths(file).stdout_path, ec);
    fs::remove(capture_paths(file).stderr_path, ec);
    log.log(LogLevel::Info, "-", "-", "requeued " + file.filename().string());
    ++moved;
  }
  return moved;
}

std::size_t recover_orphans(const QueueLayout& layout, std::string_view server_id, Logger& log) {
  std::size_t moved = 0;
  for (const auto& file : list_sorted(layout.processing(), ".job")) {
    const auto owner = read_claim_marker(file);
    if (owner) {
      if (owner->server_id != server_id || owner_alive(*owner)) continue;
    } else {
      struct stat st {};
      if (::stat(file.c_str(), &st) != 0) continue;
      const auto changed = std::chrono::system_clock::from_time_t(st.st_ctime);
      if (std::chrono::system_clock::now() - changed < kUnmarkedOrphanGrace) continue;
    }
    if (!rename_no_replace(file, layout.queue() / file.filename())) continue;
    std::error_code ec;
    fs::remove(claim_marker(file), ec);
    fs::remove(capture_paths(file).stdout_path, ec);
    fs::remove(capture_paths(file).stderr_path, ec);
    log.log(LogLevel::Warn, server_id, "-", "recovered_orphan " + file.filename().string());
    ++moved;
  }
  // Markers whose job file already moved on (crash inside finalize).
  std::error_code ec;
  for (fs::directory_iterator it(layout.processing(), ec), end; !ec && it != end; it.increment(ec)) {
    const auto name = it->path().filename().native();
    constexpr std::string_view kSuffix = ".job.claim";
    if (name.size() <= kSuffix.size() ||
        name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0)
      continue;
    const auto job_file = it->path().parent_path() / name.substr(0, name.size() - 6);
    std::error_code e2;
    if (!fs::exists(job_file, e2)) {
      const auto owner = read_claim_marker(job_file);
      if (owner && owner->server_id == server_id && !owner_alive(*owner))
        fs::remove(it->path(), e2);
    }
  }
  return moved;
}

void validate_server_config(const ServerConfig& config, const RunnerRegistry& registry) {
  if (config.server_id.empty()) throw ConfigError("server_id is empty");
  if (config.poll_interval.count() <= 0) throw ConfigError("poll_interval must be > 0");
  if (!registry.contains(config.runner)) (void)registry.create(config.runner);
  const QueueLayout layout(config.queue_root);
  if (!layout.is_initialized())
    throw ConfigError("queue_root " + config.queue_root.string() +
                      " is not an initialized queue (run `evidenceflow init`)");
}

ServeStats serve(const ServerConfig& config, const RunnerRegistry& registry,
                 std::stop_token stop, ServeOptions options, Logger& log) {
  validate_server_config(config, registry);
  const QueueLayout layout(config.queue_root);
  auto runner = registry.create(config.runner);

  ServeStats stats;
  stats.recovered = recover_orphans(layout, config.server_id, log);
  log.log(LogLevel::Info, config.server_id, "-",
          "serving " + config.queue_root.string() + " runner=" + config.runner +
              " lock_policy=" + std::string(to_string(config.lock_policy)));

  std::mutex mu;
  std::condition_variable_any wake;
  while (!stop.stop_requested()) {
    std::optional<ClaimedJob> claimed;
    try {
      claimed = claim_next(layout, config.server_id, log);
    } catch (const std::exception& e) {
      log.log(LogLevel::Error, config.server_id, "-", std::string("claim_error ") + e.what());
    }
    if (!claimed) {
      if (options.once) break;
      std::unique_lock lock(mu);
      wake.wait_for(lock, stop, config.poll_interval, [] { return false; });
      continue;
    }
    const auto outcome = execute_claimed(*claimed, *runner, config, log);
    try {
      finalize(*claimed, outcome, layout, log);
    } catch (const std::exception&) {
      // Already logged as fatal; the file stays in processing/ for recovery.
      continue;
    }
    switch (outcome.kind) {
      case OutcomeKind::Succeeded: ++stats.succeeded; break;
      case OutcomeKind::Failed: ++stats.failed; break;
      case OutcomeKind::Locked: ++stats.locked; break;
    }
  }
  log.log(LogLevel::Info, config.server_id, "-", "stopped");
  return stats;
}

QueueCounts count_jobs(const QueueLayout& layout) {
  QueueCounts c;
  const auto queued = list_sorted(layout.queue(), ".job");
  c.queued = queued.size();
  c.processing = list_sorted(layout.processing(), ".job").size();
  c.succeeded = list_sorted(layout.succeeded(), ".job").size();
  c.failed = list_sorted(layout.failed(), ".job").size();
  c.locked = list_sorted(layout.locked(), ".job").size();
  for (const auto& f : queued) {
    const auto name = f.filename().string();
    if (name.size() < 16) continue;
    // YYYYMMDDThhmmssZ -> YYYY-MM-DDThh:mm:ssZ
    const std::string iso = name.substr(0, 4) + "-" + name.substr(4, 2) + "-" +
                            name.substr(6, 2) + "T" + name.substr(9, 2) + ":" +
                            name.substr(11, 2) + ":" + name.substr(13, 2) + "Z";
    if (const auto t = parse_iso_utc(iso))
      if (!c.oldest_queued_created || *t < *c.oldest_queued_created) c.oldest_queued_created = *t;
  }
  return c;
}

}  // namespace evidenceflow
