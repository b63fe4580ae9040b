#include "evidenceflow/layout.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <string>

#include "evidenceflow/fsutil.hpp"

namespace evidenceflow {

std::string_view folder_name(JobState state) {
  switch (state) {
    case JobState::Queued: return "queue";
    case JobState::Processing: return "processing";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
    case JobState::Locked: return "locked";
  }
  return "";
}

bool QueueLayout::is_initialized() const {
  std::error_code ec;
  for (auto state : kAllJobStates)
    if (!fs::is_directory(dir(state), ec)) return false;
  return true;
}

QueueLayout init_queue_layout(const fs::path& root) {
  QueueLayout layout(root);
  for (auto state : kAllJobStates) {
    const auto dir = layout.dir(state);
    std::error_code ec;
    fs::create_directories(dir, ec);
    // create_directories reports success for an existing directory; a
    // concurrent creator can still surface EEXIST on some libstdc++ builds.
    if (ec && !fs::is_directory(dir)) {
      throw IoError("cannot create queue folder (" + ec.message() + ")", dir);
    }
  }
  return layout;
}

namespace {

class FdGuard {
 public:
  explicit FdGuard(int fd) : fd_(fd) {}
  ~FdGuard() {
    if (fd_ >= 0) ::close(fd_);
  }
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

std::uint64_t next_seq(const QueueLayout& layout) {
  const auto path = layout.seq_file();
  FdGuard fd(::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644));
  if (fd.get() < 0)
    throw IoError(std::string("cannot open seq file (") + std::strerror(errno) + ")", path);
  while (::flock(fd.get(), LOCK_EX) != 0) {
    if (errno != EINTR)
      throw IoError(std::string("cannot lock seq file (") + std::strerror(errno) + ")", path);
  }

  char buf[32] = {};
  const ssize_t n = ::pread(fd.get(), buf, sizeof buf - 1, 0);
  if (n < 0) throw IoError("cannot read seq file", path);
  std::uint64_t current = 0;
  std::string_view text(buf, std::size_t(n));
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.remove_suffix(1);
  if (!text.empty()) {
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), current);
    if (ec != std::errc{} || end != text.data() + text.size())
      throw IoError("seq file is corrupt", path);
  }
  const std::uint64_t next = current + 1;
  if (next > kMaxSeq) throw IoError("seq space exhausted", path);

  const auto out = std::to_string(next) + "\n";
  if (::ftruncate(fd.get(), 0) != 0 ||
      ::pwrite(fd.get(), out.data(), out.size(), 0) != ssize_t(out.size()) ||
      ::fsync(fd.get()) != 0)
    throw IoError("cannot update seq file", path);
  ::flock(fd.get(), LOCK_UN);
  return next;
}

fs::path enqueue_job(const QueueLayout& layout, const JobSpec& job) {
  validate_job(job);
  const auto path = layout.queue() / job_filename(job);
  write_file_atomic(path, render_job_file(job));
  return path;
}

fs::path submit_job(const QueueLayout& layout, JobSpec& job) {
  if (!layout.is_initialized())
    throw IoError("queue layout is not initialized", layout.root());
  job.seq = next_seq(layout);
  return enqueue_job(layout, job);
}

}  // namespace evidenceflow
