#include "evidenceflow/fsutil.hpp"

#include <fcntl.h>
#include <stdio.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "evidenceflow/error.hpp"

namespace evidenceflow {

namespace {

std::string errno_text(int err) { return std::strerror(err); }

fs::path temp_sibling(const fs::path& path) {
  static std::atomic<unsigned> counter{0};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream name;
  name << '.' << path.filename().string() << ".tmp." << ::getpid() << '.'
       << counter.fetch_add(1) << '.' << std::hex << (rng() & 0xffffff);
  return path.parent_path() / name.str();
}

void write_fd_fully(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed (" + errno_text(errno) + ")", path);
    }
    data.remove_prefix(std::size_t(n));
  }
}

void write_new_file(const fs::path& path, std::string_view contents) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot create (" + errno_text(errno) + ")", path);
  try {
    write_fd_fully(fd, contents, path);
    if (::fsync(fd) != 0 && errno != EINVAL)
      throw IoError("fsync failed (" + errno_text(errno) + ")", path);
  } catch (...) {
    ::close(fd);
    ::unlink(path.c_str());
    throw;
  }
  ::close(fd);
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  const auto tmp = temp_sibling(path);
  write_new_file(tmp, contents);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const int err = errno;
    ::unlink(tmp.c_str());
    throw IoError("rename into place failed (" + errno_text(err) + ")", path);
  }
}

bool create_exclusive(const fs::path& path, std::string_view contents) {
  const auto tmp = temp_sibling(path);
  write_new_file(tmp, contents);
  const int rc = ::link(tmp.c_str(), path.c_str());
  const int err = errno;
  ::unlink(tmp.c_str());
  if (rc == 0) return true;
  if (err == EEXIST) return false;
  if (err == EPERM || err == ENOTSUP || err == EOPNOTSUPP) {
    // No hard links on this filesystem: plain exclusive create.
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) {
      if (errno == EEXIST) return false;
      throw IoError("cannot create (" + errno_text(errno) + ")", path);
    }
    write_fd_fully(fd, contents, path);
    ::close(fd);
    return true;
  }
  throw IoError("cannot create (" + errno_text(err) + ")", path);
}

std::vector<fs::path> list_sorted(const fs::path& dir, std::string_view suffix) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    const auto name = it->path().filename().string();
    if (name.empty() || name.front() == '.') continue;
    if (name.size() < suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    std::error_code type_ec;
    if (!it->is_regular_file(type_ec)) continue;
    out.push_back(it->path());
  }
  if (ec) throw IoError("cannot list directory (" + ec.message() + ")", dir);
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().native() < b.filename().native();
  });
  return out;
}

bool rename_no_replace(const fs::path& from, const fs::path& to) {
  if (::renameat2(AT_FDCWD, from.c_str(), AT_FDCWD, to.c_str(), RENAME_NOREPLACE) == 0)
    return true;
  int err = errno;
  if (err == EINVAL || err == ENOSYS) {
    // Filesystem without RENAME_NOREPLACE support.
    if (::link(from.c_str(), to.c_str()) == 0) {
      ::unlink(from.c_str());
      return true;
    }
    err = errno;
  }
  if (err == EEXIST) return false;
  if (err == ENOENT) {
    std::error_code ec;
    if (!fs::exists(from, ec)) return false;
  }
  throw IoError("rename to " + to.string() + " failed (" + errno_text(err) + ")", from);
}

}  // namespace evidenceflow
