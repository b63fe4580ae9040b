#include "evidenceflow/subprocess.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <thread>

extern char** environ;

namespace evidenceflow {

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

int open_capture(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0)
    throw IoError(std::string("cannot open capture file (") + std::strerror(errno) + ")", path);
  return fd;
}

std::vector<std::string> build_environment(
    const std::vector<std::pair<std::string, std::string>>& additions) {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
  }
  for (const auto& [k, v] : additions) env[k] = v;
  std::vector<std::string> out;
  out.reserve(env.size());
  for (const auto& [k, v] : env) out.push_back(k + "=" + v);
  return out;
}

}  // namespace

ExecRecord run_process(const InvocationPlan& plan, const CapturePaths& capture) {
  if (plan.argv.empty()) throw Error("invocation plan has an empty argv");

  ExecRecord rec;
  rec.stdout_path = capture.stdout_path;
  rec.stderr_path = capture.stderr_path;
  Fd out(open_capture(capture.stdout_path));
  Fd err(open_capture(capture.stderr_path));

  // Everything the child needs is prepared before fork(); the child only
  // makes async-signal-safe calls.
  std::vector<char*> argv;
  for (const auto& a : plan.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const auto env_strings = build_environment(plan.env_additions);
  std::vector<char*> envp;
  for (const auto& e : env_strings) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);
  const std::string workdir = plan.working_dir.native();
  static constexpr char kExecFailed[] = "evidenceflow: exec failed\n";
  static constexpr char kChdirFailed[] = "evidenceflow: chdir failed\n";

  const auto started = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    sigset_t none;
    ::sigemptyset(&none);
    ::sigprocmask(SIG_SETMASK, &none, nullptr);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::dup2(out.get(), STDOUT_FILENO);
    ::dup2(err.get(), STDERR_FILENO);
    if (!workdir.empty() && ::chdir(workdir.c_str()) != 0) {
      (void)!::write(STDERR_FILENO, kChdirFailed, sizeof kChdirFailed - 1);
      ::_exit(127);
    }
    ::execvpe(argv[0], argv.data(), envp.data());
    (void)!::write(STDERR_FILENO, kExecFailed, sizeof kExecFailed - 1);
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  int status = 0;
  auto backoff = std::chrono::milliseconds(2);
  while (true) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) throw Error(std::string("waitpid failed: ") + std::strerror(errno));
    const auto elapsed = std::chrono::steady_clock::now() - started;
    if (plan.timeout && elapsed >= *plan.timeout) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      rec.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, std::chrono::milliseconds(50));
  }
  rec.duration = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  if (WIFEXITED(status)) rec.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) rec.signal = WTERMSIG(status);
  return rec;
}

}  // namespace evidenceflow
