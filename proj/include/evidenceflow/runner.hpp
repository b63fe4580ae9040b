#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evidenceflow/error.hpp"
#include "evidenceflow/job.hpp"
#include "evidenceflow/server_config.hpp"

namespace evidenceflow {

struct InvocationPlan {
  std::vector<std::string> argv;  // program + arguments, fully substituted
  std::filesystem::path working_dir;
  std::optional<std::chrono::milliseconds> timeout;
  std::vector<std::pair<std::string, std::string>> env_additions;

  bool operator==(const InvocationPlan&) const = default;
};

struct CapturePaths {
  std::filesystem::path stdout_path;
  std::filesystem::path stderr_path;
};

struct ExecRecord {
  std::optional<int> exit_code;  // set when the program exited normally
  std::optional<int> signal;     // set when it was killed by a signal
  bool timed_out = false;
  std::filesystem::path stdout_path;
  std::filesystem::path stderr_path;
  std::chrono::milliseconds duration{0};
};

struct Verdict {
  bool succeeded = false;
  std::string detail;
};

class UnresolvedPlaceholder : public Error {
 public:
  explicit UnresolvedPlaceholder(std::string name);
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

// The per-server module that turns a job into a program run and a verdict.
// plan() must be pure; execute() may only touch the job's output directory,
// the capture files and temp space.
class Runner {
 public:
  virtual ~Runner() = default;
  virtual std::string_view name() const = 0;
  virtual InvocationPlan plan(const JobSpec& job, const RunnerSettings& settings) const = 0;
  virtual ExecRecord execute(const InvocationPlan& plan, const CapturePaths& capture) = 0;
  virtual Verdict check_result(const JobSpec& job, const ExecRecord& record,
                               const RunnerSettings& settings) const = 0;
};

// Shared "check result" rule:
// exit code in `ok_exit_codes` (default 0), every `required_outputs` entry
// (comma separated, templated, relative to job.output) exists, and when
// `min_output_files` is set, at least that many regular files under output.
Verdict check_standard_result(const JobSpec& job, const ExecRecord& record,
                              const RunnerSettings& settings);

// Replaces `{source}`, `{output}`, `{case_id}`, `{param.<k>}` (and the other
// JobSpec fields) inside one token. Throws UnresolvedPlaceholder.
std::string substitute_placeholders(std::string_view token, const JobSpec& job);

// Whitespace-separated tokens; double quotes group, backslash escapes inside
// quotes. Substitution happens per token afterwards, so values containing
// spaces never split.
std::vector<std::string> split_command_template(std::string_view text);

// Runs an external program via the command template in settings.
class GenericCommandRunner : public Runner {
 public:
  std::string_view name() const override { return "generic_command"; }
  InvocationPlan plan(const JobSpec& job, const RunnerSettings& settings) const override;
  ExecRecord execute(const InvocationPlan& plan, const CapturePaths& capture) override;
  Verdict check_result(const JobSpec& job, const ExecRecord& record,
                       const RunnerSettings& settings) const override;
};

// In-process test double. Behavior comes from settings:
//   behavior=succeed|fail|hang, exit_code, sleep_ms, create=<file,...>,
//   entry_log=<path> (appends "enter"/"exit" lines), timeout_seconds.
class MockRunner : public Runner {
 public:
  std::string_view name() const override { return "mock"; }
  InvocationPlan plan(const JobSpec& job, const RunnerSettings& settings) const override;
  ExecRecord execute(const InvocationPlan& plan, const CapturePaths& capture) override;
  Verdict check_result(const JobSpec& job, const ExecRecord& record,
                       const RunnerSettings& settings) const override;
};

class RunnerRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Runner>()>;

  static RunnerRegistry with_builtins();

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  // Throws ConfigError listing the registered names.
  std::unique_ptr<Runner> create(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Factory, std::less<>> factories_;
};

std::optional<std::chrono::milliseconds> timeout_setting(const RunnerSettings& settings);

}  // namespace evidenceflow
