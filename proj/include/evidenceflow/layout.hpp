#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "evidenceflow/job.hpp"

namespace evidenceflow {

enum class JobState { Queued, Processing, Succeeded, Failed, Locked };

inline constexpr std::array<JobState, 5> kAllJobStates = {
    JobState::Queued, JobState::Processing, JobState::Succeeded,
    JobState::Failed, JobState::Locked};

// On-disk folder names; part of the queue protocol.
std::string_view folder_name(JobState state);

class QueueLayout {
 public:
  explicit QueueLayout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path dir(JobState state) const { return root_ / folder_name(state); }
  std::filesystem::path queue() const { return dir(JobState::Queued); }
  std::filesystem::path processing() const { return dir(JobState::Processing); }
  std::filesystem::path succeeded() const { return dir(JobState::Succeeded); }
  std::filesystem::path failed() const { return dir(JobState::Failed); }
  std::filesystem::path locked() const { return dir(JobState::Locked); }
  std::filesystem::path seq_file() const { return root_ / ".seq"; }

  // True when all five subdirectories exist.
  bool is_initialized() const;

 private:
  std::filesystem::path root_;
};

// Creates the five state folders. Idempotent and safe to race.
QueueLayout init_queue_layout(const std::filesystem::path& root);

// Allocates the next sequence number from `<root>/.seq` under an exclusive
// advisory lock. First value is 1.
std::uint64_t next_seq(const QueueLayout& layout);

// Assigns job.seq, then makes the job file visible in queue/ complete
// (temp name + rename). Returns the final path.
std::filesystem::path submit_job(const QueueLayout& layout, JobSpec& job);

// Writes a job into queue/ keeping its existing seq (used by producers that
// already hold a seq, and by tests).
std::filesystem::path enqueue_job(const QueueLayout& layout, const JobSpec& job);

}  // namespace evidenceflow
