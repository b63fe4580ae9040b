#include "evidenceflow/runner.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include "evidenceflow/kvtext.hpp"
#include "evidenceflow/subprocess.hpp"

namespace evidenceflow {

namespace fs = std::filesystem;

UnresolvedPlaceholder::UnresolvedPlaceholder(std::string name)
    : Error("unresolved placeholder {" + name + "}"), name_(std::move(name)) {}

namespace {

std::optional<std::string> lookup_placeholder(std::string_view name, const JobSpec& job) {
  if (name == "source") return job.source.native();
  if (name == "source_root") return job.source_root.native();
  if (name == "output") return job.output.native();
  if (name == "case_id") return job.case_id;
  if (name == "evidence_name") return job.evidence_name;
  if (name == "requested_by") return job.requested_by;
  if (name == "job_id") return job.job_id;
  if (name == "tool") return job.tool;
  if (name == "seq") return std::to_string(job.seq);
  constexpr std::string_view kParam = "param.";
  if (name.substr(0, kParam.size()) == kParam) {
    const auto key = name.substr(kParam.size());
    for (const auto& [k, v] : job.params)
      if (k == key) return v;
  }
  return std::nullopt;
}

std::optional<std::string> setting(const RunnerSettings& s, std::string_view key) {
  if (auto it = s.find(key); it != s.end()) return it->second;
  return std::nullopt;
}

long long parse_int(std::string_view text, std::string_view what) {
  long long v = 0;
  text = trim(text);
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size())
    throw ConfigError("runner setting " + std::string(what) + " is not an integer: '" +
                      std::string(text) + "'");
  return v;
}

std::size_t count_files(const fs::path& root) {
  std::size_t n = 0;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return 0;
  for (fs::recursive_directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file(ec)) ++n;
  return n;
}

std::string describe_exit(const ExecRecord& rec) {
  if (rec.timed_out) return "timed out after " + std::to_string(rec.duration.count()) + " ms";
  if (rec.signal) return "killed by signal " + std::to_string(*rec.signal);
  if (rec.exit_code) return "exit " + std::to_string(*rec.exit_code);
  return "no exit status";
}

}  // namespace

std::string substitute_placeholders(std::string_view token, const JobSpec& job) {
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    const char c = token[i];
    if (c == '{' && i + 1 < token.size() && token[i + 1] == '{') {
      out.push_back('{');
      i += 2;
    } else if (c == '}' && i + 1 < token.size() && token[i + 1] == '}') {
      out.push_back('}');
      i += 2;
    } else if (c == '{') {
      const auto close = token.find('}', i + 1);
      if (close == std::string_view::npos)
        throw UnresolvedPlaceholder(std::string(token.substr(i + 1)));
      const auto name = token.substr(i + 1, close - i - 1);
      const auto value = lookup_placeholder(name, job);
      if (!value) throw UnresolvedPlaceholder(std::string(name));
      out += *value;
      i = close + 1;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> split_command_template(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  bool in_token = false, quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '\\' && i + 1 < text.size()) {
        current.push_back(text[++i]);
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = in_token = true;
    } else if (c == ' ' || c == '\t') {
      if (in_token) tokens.push_back(std::move(current));
      current.clear();
      in_token = false;
    } else {
      current.push_back(c);
      in_token = true;
    }
  }
  if (quoted) throw ConfigError("command_template has an unterminated quote");
  if (in_token) tokens.push_back(std::move(current));
  return tokens;
}

std::optional<std::chrono::milliseconds> timeout_setting(const RunnerSettings& settings) {
  const auto raw = setting(settings, "timeout_seconds");
  if (!raw || trim(*raw).empty()) return std::nullopt;
  double seconds = 0;
  try {
    seconds = std::stod(*raw);
  } catch (const std::exception&) {
    throw ConfigError("runner setting timeout_seconds is not a number");
  }
  if (seconds <= 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

Verdict check_standard_result(const JobSpec& job, const ExecRecord& rec,
                              const RunnerSettings& settings) {
  if (rec.timed_out || rec.signal || !rec.exit_code)
    return {false, describe_exit(rec)};

  std::vector<long long> ok_codes{0};
  if (const auto raw = setting(settings, "ok_exit_codes")) {
    ok_codes.clear();
    for (const auto& item : split_list(*raw)) ok_codes.push_back(parse_int(item, "ok_exit_codes"));
  }
  if (std::find(ok_codes.begin(), ok_codes.end(), *rec.exit_code) == ok_codes.end())
    return {false, describe_exit(rec) + " not in ok_exit_codes"};

  if (const auto raw = setting(settings, "required_outputs")) {
    for (const auto& item : split_list(*raw)) {
      std::string rel;
      try {
        rel = substitute_placeholders(item, job);
      } catch (const UnresolvedPlaceholder& e) {
        return {false, e.what()};
      }
      const auto path = job.output / rel;
      std::error_code ec;
      if (!fs::exists(path, ec)) return {false, "missing output " + path.string()};
    }
  }
  if (const auto raw = setting(settings, "min_output_files")) {
    const auto need = parse_int(*raw, "min_output_files");
    const auto have = count_files(job.output);
    if (static_cast<long long>(have) < need)
      return {false, "only " + std::to_string(have) + " output files, need " +
                         std::to_string(need)};
  }
  return {true, describe_exit(rec)};
}

// generic_command

InvocationPlan GenericCommandRunner::plan(const JobSpec& job,
                                          const RunnerSettings& settings) const {
  const auto tmpl = setting(settings, "command_template");
  if (!tmpl) throw ConfigError("generic_command runner needs runner.command_template");
  InvocationPlan p;
  for (const auto& token : split_command_template(*tmpl))
    p.argv.push_back(substitute_placeholders(token, job));
  if (p.argv.empty()) throw ConfigError("command_template is empty");
  p.working_dir = setting(settings, "working_dir")
                      ? fs::path(substitute_placeholders(*setting(settings, "working_dir"), job))
                      : job.output;
  p.timeout = timeout_setting(settings);
  constexpr std::string_view kEnv = "env.";
  for (const auto& [key, value] : settings)
    if (key.compare(0, kEnv.size(), kEnv) == 0)
      p.env_additions.emplace_back(key.substr(kEnv.size()), substitute_placeholders(value, job));
  return p;
}

ExecRecord GenericCommandRunner::execute(const InvocationPlan& plan,
                                         const CapturePaths& capture) {
  std::error_code ec;
  if (!plan.working_dir.empty()) fs::create_directories(plan.working_dir, ec);
  return run_process(plan, capture);
}

Verdict GenericCommandRunner::check_result(const JobSpec& job, const ExecRecord& rec,
                                           const RunnerSettings& settings) const {
  return check_standard_result(job, rec, settings);
}

// mock

InvocationPlan MockRunner::plan(const JobSpec& job, const RunnerSettings& settings) const {
  const auto behavior = setting(settings, "behavior").value_or("succeed");
  if (behavior != "succeed" && behavior != "fail" && behavior != "hang")
    throw ConfigError("mock behavior must be succeed, fail or hang");
  const auto exit_code =
      setting(settings, "exit_code").value_or(behavior == "fail" ? "2" : "0");
  InvocationPlan p;
  p.argv = {"mock",
            "behavior=" + behavior,
            "exit_code=" + exit_code,
            "sleep_ms=" + setting(settings, "sleep_ms").value_or("0"),
            "output=" + job.output.native(),
            "create=" + substitute_placeholders(setting(settings, "create").value_or(""), job),
            "entry_log=" + setting(settings, "entry_log").value_or(""),
            "job_id=" + job.job_id,
            "source_root=" + job.source_root.native()};
  p.working_dir = job.output;
  p.timeout = timeout_setting(settings);
  return p;
}

namespace {

void append_line(const fs::path& path, const std::string& line) {
  if (path.empty()) return;
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open entry log", path);
  // One write(2) per line: O_APPEND keeps concurrent writers' lines whole.
  const auto n = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw IoError("short write to entry log", path);
}

long long steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ExecRecord MockRunner::execute(const InvocationPlan& plan, const CapturePaths& capture) {
  std::map<std::string, std::string> args;
  for (std::size_t i = 1; i < plan.argv.size(); ++i) {
    const auto& a = plan.argv[i];
    const auto eq = a.find('=');
    if (eq != std::string::npos) args[a.substr(0, eq)] = a.substr(eq + 1);
  }
  const auto behavior = args["behavior"];
  const fs::path output = args["output"];
  const fs::path entry_log = args["entry_log"];
  const auto& job_id = args["job_id"];
  const auto& source_root = args["source_root"];

  const auto started = std::chrono::steady_clock::now();
  append_line(entry_log, "enter " + job_id + " " + source_root + " " +
                             std::to_string(steady_ns()) + "\n");

  ExecRecord rec;
  rec.stdout_path = capture.stdout_path;
  rec.stderr_path = capture.stderr_path;
  {
    std::ofstream out(capture.stdout_path, std::ios::trunc);
    std::ofstream err(capture.stderr_path, std::ios::trunc);
    if (!out || !err) throw IoError("cannot open capture files", capture.stdout_path);
    out << "mock " << behavior << " job=" << job_id << "\n";
  }

  auto sleep_for = std::chrono::milliseconds(parse_int(args["sleep_ms"], "sleep_ms"));
  if (behavior == "hang" && sleep_for.count() == 0) sleep_for = std::chrono::minutes(10);
  const auto deadline = started + sleep_for;
  while (std::chrono::steady_clock::now() < deadline) {
    if (plan.timeout && std::chrono::steady_clock::now() - started >= *plan.timeout) {
      rec.timed_out = true;
      rec.signal = SIGKILL;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  if (!rec.timed_out) {
    std::error_code ec;
    fs::create_directories(output, ec);
    if (behavior == "succeed" || behavior == "fail") {
      for (const auto& name : split_list(args["create"])) {
        const auto path = output / name;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream f(path, std::ios::trunc);
        f << "mock output for " << job_id << "\n";
      }
    }
    rec.exit_code = static_cast<int>(parse_int(args["exit_code"], "exit_code"));
  }
  rec.duration = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  append_line(entry_log, "exit " + job_id + " " + source_root + " " +
                             std::to_string(steady_ns()) + "\n");
  return rec;
}

Verdict MockRunner::check_result(const JobSpec& job, const ExecRecord& rec,
                                 const RunnerSettings& settings) const {
  return check_standard_result(job, rec, settings);
}

// registry

RunnerRegistry RunnerRegistry::with_builtins() {
  RunnerRegistry r;
  r.add("generic_command", [] { return std::make_unique<GenericCommandRunner>(); });
  r.add("mock", [] { return std::make_unique<MockRunner>(); });
  return r;
}

void RunnerRegistry::add(std::string name, Factory factory) {
  factories_[std::move(name)] = std::move(factory);
}

bool RunnerRegistry::contains(std::string_view name) const {
  return factories_.find(name) != factories_.end();
}

std::unique_ptr<Runner> RunnerRegistry::create(std::string_view name) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) {
    std::ostringstream msg;
    msg << "unknown runner '" << name << "'; available:";
    for (const auto& n : names()) msg << ' ' << n;
    throw ConfigError(msg.str());
  }
  return it->second();
}

std::vector<std::string> RunnerRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

}  // namespace evidenceflow
