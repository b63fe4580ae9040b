#include "evidenceflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "evidenceflow/archiver.hpp"
#include "evidenceflow/error.hpp"
#include "evidenceflow/job.hpp"
#include "evidenceflow/kvtext.hpp"
#include "evidenceflow/layout.hpp"
#include "evidenceflow/log.hpp"
#include "evidenceflow/queue_server.hpp"
#include "evidenceflow/scheduler.hpp"
#include "evidenceflow/server_config.hpp"
#include "evidenceflow/source_lock.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

namespace fs = std::filesystem;

namespace {

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::string config;
  std::string log_level = "info";
  bool no_color = false;
};

fs::path config_path(const Globals& g) {
  if (!g.config.empty()) return g.config;
  if (const char* env = std::getenv("EVIDENCEFLOW_CONFIG"); env != nullptr && *env != '\0')
    return env;
  throw UsageError("no config given (use --config or EVIDENCEFLOW_CONFIG)");
}

// Queue root from --queue, else from the server config.
fs::path queue_root(const Globals& g, const std::string& queue_flag) {
  if (!queue_flag.empty()) return queue_flag;
  return load_server_config(config_path(g)).queue_root;
}

std::string current_user() {
  for (const char* var : {"USER", "LOGNAME"})
    if (const char* v = std::getenv(var); v != nullptr && *v != '\0') return v;
  return "unknown";
}

std::string format_age(std::chrono::seconds age) {
  const auto s = age.count();
  std::ostringstream out;
  if (s >= 86400) out << s / 86400 << "d";
  if (s >= 3600) out << (s % 86400) / 3600 << "h";
  if (s >= 60) out << (s % 3600) / 60 << "m";
  out << s % 60 << "s";
  return out.str();
}

// Reads one line; nullopt on EOF.
std::optional<std::string> prompt(Io& io, const std::string& question) {
  io.err << question << ": " << std::flush;
  std::string line;
  if (!std::getline(io.in, line)) {
    io.err << '\n';
    return std::nullopt;
  }
  return std::string(trim(line));
}

// Flag value when given; otherwise a prompt unless running non-interactively.
std::string ask(Io& io, bool yes, const std::string& flag_value, const std::string& flag,
                const std::string& question) {
  if (!flag_value.empty()) return flag_value;
  if (yes) throw UsageError("--" + flag + " is required with --yes");
  auto answer = prompt(io, question);
  if (!answer) throw UsageError("input closed while asking for " + flag);
  if (answer->empty()) throw UsageError(flag + " must not be empty");
  return *answer;
}

int cmd_init(Io& io, const Globals& g, const std::string& queue) {
  const auto root = queue_root(g, queue);
  init_queue_layout(root);
  io.out << "initialized " << root.string() << '\n';
  return kExitOk;
}

struct SubmitArgs {
  std::string queue, tool, source, source_root, output, case_id, name, requested_by;
  std::vector<std::string> params;
};

int cmd_submit(Io& io, const Globals& g, const SubmitArgs& a) {
  const QueueLayout layout(queue_root(g, a.queue));
  if (!layout.is_initialized())
    throw UsageError("queue root " + layout.root().string() + " is not initialized");
  JobSpec job;
  job.job_id = make_job_id();
  job.tool = a.tool;
  job.source = a.source;
  if (!a.source_root.empty()) job.source_root = a.source_root;
  else job.source_root = fs::is_directory(job.source) ? job.source : job.source.parent_path();
  job.output = a.output;
  job.case_id = a.case_id;
  job.evidence_name = a.name;
  job.requested_by = a.requested_by.empty() ? current_user() : a.requested_by;
  job.created_utc = now_utc();
  for (const auto& p : a.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--param expects key=value, got '" + p + "'");
    job.params.emplace_back(p.substr(0, eq), p.substr(eq + 1));
  }
  try {
    validate_job(job);
  } catch (const InvalidJob& e) {
    throw UsageError(e.what());
  }
  const auto path = submit_job(layout, job);
  io.out << path.string() << '\n';
  return kExitOk;
}

int cmd_serve(Io& io, const Globals& g, bool once, std::stop_token stop) {
  const auto config = load_server_config(config_path(g));
  const auto registry = RunnerRegistry::with_builtins();
  validate_server_config(config, registry);
  Logger log(io.err, parse_log_level(g.log_level));
  const auto stats = serve(config, registry, stop, ServeOptions{once}, log);
  io.out << "succeeded=" << stats.succeeded << " failed=" << stats.failed
         << " locked=" << stats.locked << " recovered=" << stats.recovered << '\n';
  return kExitOk;
}

int cmd_status(Io& io, const Globals& g, const std::string& queue) {
  const QueueLayout layout(queue_root(g, queue));
  if (!layout.is_initialized())
    throw UsageError("queue root " + layout.root().string() + " is not initialized");
  const auto c = count_jobs(layout);
  io.out << "queue=" << c.queued << '\n'
         << "processing=" << c.processing << '\n'
         << "succeeded=" << c.succeeded << '\n'
         << "failed=" << c.failed << '\n'
         << "locked=" << c.locked << '\n';
  if (c.oldest_queued_created) {
    const auto age = std::max(std::chrono::seconds{0}, now_utc() - *c.oldest_queued_created);
    io.out << "oldest_queued_age=" << format_age(age) << '\n';
  } else {
    io.out << "oldest_queued_age=-\n";
  }
  return kExitOk;
}

int cmd_requeue(Io& io, const Globals& g, const std::string& queue) {
  const QueueLayout layout(queue_root(g, queue));
  if (!layout.is_initialized())
    throw UsageError("queue root " + layout.root().string() + " is not initialized");
  Logger log(io.err, parse_log_level(g.log_level));
  const auto n = requeue_locked(layout, log);
  io.out << "requeued=" << n << '\n';
  return kExitOk;
}

int cmd_lock_break(Io& io, const std::string& source, bool yes) {
  const auto current = read_lock(source);
  if (!current) {
    io.out << "no lock at " << lock_path(source).string() << '\n';
    return kExitOk;
  }
  io.out << "lock " << current->path.string() << " holder=" << current->holder
         << " job_id=" << current->job_id << " acquired_utc="
         << (current->acquired_utc ? format_iso_utc(*current->acquired_utc) : "?") << '\n';
  if (!yes) {
    const auto answer = prompt(io, "break this lock? [y/N]");
    if (!answer) throw UsageError("input closed before confirmation");
    if (*answer != "y" && *answer != "Y" && *answer != "yes") {
      io.out << "lock kept\n";
      return kExitOk;
    }
  }
  if (break_lock(source)) io.out << "lock removed\n";
  else io.out << "lock already gone\n";
  return kExitOk;
}

struct AcquireArgs {
  std::string device_id, dest, case_id, name, investigator;
  std::vector<std::string> prep;
  bool prep_given = false;
  bool yes = false;
};

int cmd_acquire(Io& io, const Globals& g, AcquireArgs a, const AcquisitionHooks& hooks) {
  const auto config = load_acquisition_config(config_path(g));
  Logger log(io.err, parse_log_level(g.log_level));

  // Fig. 2 order: device, destination, name, credential, preparations.
  FakeDeviceProvider provider(config.fake_devices);
  const auto before = provider.snapshot();
  if (a.device_id.empty() && !a.yes) {
    if (!prompt(io, "connect the device, then press Enter"))
      throw UsageError("input closed while waiting for the device");
  }
  const auto fresh = new_devices(before, provider.snapshot());
  if (fresh.empty()) throw UsageError("no newly connected device found");
  if (a.device_id.empty()) {
    if (a.yes) throw UsageError("--device-id is required with --yes");
    io.err << "new devices:\n";
    for (std::size_t i = 0; i < fresh.size(); ++i)
      io.err << "  " << i + 1 << ") " << fresh[i].device_id << "  " << fresh[i].description << "  "
             << fresh[i].size_bytes << " bytes\n";
    a.device_id = ask(io, false, "", "device-id", "device id");
  }
  const auto dev = std::find_if(fresh.begin(), fresh.end(),
                                [&](const Device& d) { return d.device_id == a.device_id; });
  if (dev == fresh.end()) throw UsageError("device '" + a.device_id + "' is not a newly connected device");

  if (a.dest.empty() && !a.yes) {
    io.err << "destinations:";
    for (const auto& loc : config.output_locations) io.err << ' ' << loc.name;
    io.err << '\n';
  }
  AcquisitionRequest request;
  request.device = *dev;
  request.destination = ask(io, a.yes, a.dest, "dest", "destination");
  request.case_id = ask(io, a.yes, a.case_id, "case", "case id");
  request.evidence_name = ask(io, a.yes, a.name, "name", "evidence name");
  request.investigator = ask(io, a.yes, a.investigator, "investigator", "investigator");
  if (a.prep_given) {
    for (const auto& p : a.prep)
      for (auto& t : split_list(p)) request.preparations.push_back(t);
  } else if (!a.yes) {
    io.err << "preparations:";
    for (const auto& [tool, root] : config.queues) io.err << ' ' << tool;
    io.err << '\n';
    const auto answer = prompt(io, "preparations (comma separated, empty for none)");
    if (!answer) throw UsageError("input closed while asking for preparations");
    request.preparations = split_list(*answer);
  }

  std::map<std::string, QueueLayout> queues;
  for (const auto& [tool, root] : config.queues) queues.emplace(tool, QueueLayout(root));
  try {
    validate_request(request, config, queues);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  if (!a.yes) {
    io.err << "acquire " << request.device.device_id << " into " << request.destination << '/'
           << request.case_id << '/' << request.evidence_name << '\n';
    const auto answer = prompt(io, "start? [y/N]");
    if (!answer) throw UsageError("input closed before confirmation");
    if (*answer != "y" && *answer != "Y" && *answer != "yes") {
      io.err << "aborted\n";
      return kExitUsage;
    }
  }

  MockImager imager(config.imager == "mock_misreport");
  const auto report = run_acquisition(request, config, queues, imager, hooks, log);
  io.out << render_acquisition_report(report);
  return report.succeeded() ? kExitOk : kExitFailure;
}

int cmd_archive(Io& io, const Globals& g, bool dry_run, const std::string& now_text) {
  const auto policy = load_archive_config(config_path(g));
  UtcTime now = now_utc();
  if (!now_text.empty()) {
    const auto parsed = parse_utc_loose(now_text);
    if (!parsed) throw UsageError("--now expects an ISO-8601 UTC timestamp, got '" + now_text + "'");
    now = *parsed;
  }
  Logger log(io.err, parse_log_level(g.log_level));
  const auto report = archive_run(policy, policy.registry_path, now, ArchiveOptions{dry_run}, log);
  io.out << render_archive_report(report);
  return report.count(ArchiveAction::Error) == 0 ? kExitOk : kExitFailure;
}

int cmd_simulate(Io& io, const std::string& scenario, bool render, const std::string& compare_with) {
  const auto run = [&](const std::string& path) {
    const auto sc = sim::load_scenario(path);
    const auto timeline = sim::simulate(sc);
    if (render) io.out << sim::render_table(timeline) << '\n';
    const auto m = sim::metrics(timeline, sc.calendar);
    io.out << sim::render_metrics(m, sc.calendar);
    return m;
  };
  const auto first = run(scenario);
  if (!compare_with.empty()) {
    io.out << '\n';
    const auto second = run(compare_with);
    io.out << '\n' << sim::render_savings(sim::compare(first, second));
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, const CliContext& context) {
  Io io{context.in ? *context.in : std::cin, context.out ? *context.out : std::cout,
        context.err ? *context.err : std::cerr};

  CLI::App app{"Forensic evidence workflow toolkit: acquisition, job queue servers, archiving "
               "and throughput simulation.",
               "evidenceflow"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "config file (fallback: EVIDENCEFLOW_CONFIG)");
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or fatal")
      ->check(CLI::IsMember({"debug", "info", "warn", "warning", "error", "fatal"}));
  app.add_flag("--no-color", g.no_color, "plain output (the default when not a terminal)");

  std::string queue;
  auto* init = app.add_subcommand("init", "create the queue folder layout");
  init->add_option("--queue", queue, "queue root (overrides the config)");

  SubmitArgs submit_args;
  auto* submit = app.add_subcommand("submit", "write one job file into the queue");
  submit->add_option("--queue", submit_args.queue, "queue root (overrides the config)");
  submit->add_option("--tool", submit_args.tool, "tool name")->required();
  submit->add_option("--source", submit_args.source, "evidence image path")->required();
  submit->add_option("--source-root", submit_args.source_root, "evidence directory to lock");
  submit->add_option("--output", submit_args.output, "tool output directory")->required();
  submit->add_option("--case", submit_args.case_id, "case id");
  submit->add_option("--name", submit_args.name, "evidence name");
  submit->add_option("--requested-by", submit_args.requested_by, "requester id");
  submit->add_option("--param", submit_args.params, "extra key=value (repeatable)");

  bool once = false;
  auto* serve_cmd = app.add_subcommand("serve", "run a queue server");
  serve_cmd->add_flag("--once", once, "drain the queue, then exit");

  auto* status = app.add_subcommand("status", "per-folder job counts");
  status->add_option("--queue", queue, "queue root (overrides the config)");

  auto* requeue = app.add_subcommand("requeue", "move locked jobs back into the queue");
  requeue->add_option("--queue", queue, "queue root (overrides the config)");

  std::string lock_source;
  bool lock_yes = false;
  auto* lock = app.add_subcommand("lock", "source lock maintenance");
  lock->require_subcommand(1);
  auto* lock_break = lock->add_subcommand("break", "remove a stale source lock");
  lock_break->add_option("--source", lock_source, "evidence directory")->required();
  lock_break->add_flag("--yes", lock_yes, "do not ask for confirmation");

  AcquireArgs acq;
  auto* acquire = app.add_subcommand("acquire", "image a newly connected device");
  acquire->add_option("--device-id", acq.device_id, "device to image");
  acquire->add_option("--dest", acq.dest, "output location name");
  acquire->add_option("--case", acq.case_id, "case id");
  acquire->add_option("--name", acq.name, "evidence name");
  acquire->add_option("--investigator", acq.investigator, "investigator id");
  auto* prep_opt = acquire->add_option("--prep", acq.prep, "preparation tools, comma separated");
  acquire->add_flag("--yes", acq.yes, "never prompt; missing values are errors");

  bool dry_run = false;
  std::string now_text;
  auto* archive = app.add_subcommand("archive", "move closed cases to the archive");
  archive->add_flag("--dry-run", dry_run, "report only, change nothing");
  archive->add_option("--now", now_text, "evaluate eligibility at this UTC time");

  std::string scenario, compare_with;
  bool render = false;
  auto* simulate = app.add_subcommand("simulate", "run a throughput scenario");
  simulate->add_option("--scenario", scenario, "scenario file")->required();
  simulate->add_flag("--render-table", render, "print the timeline table");
  simulate->add_option("--compare", compare_with, "second scenario to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "evidenceflow: " << e.what() << '\n';
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    io.err << sub->help();
    return kExitUsage;
  }

  try {
    if (init->parsed()) return cmd_init(io, g, queue);
    if (submit->parsed()) return cmd_submit(io, g, submit_args);
    if (serve_cmd->parsed()) return cmd_serve(io, g, once, context.stop);
    if (status->parsed()) return cmd_status(io, g, queue);
    if (requeue->parsed()) return cmd_requeue(io, g, queue);
    if (lock_break->parsed()) return cmd_lock_break(io, lock_source, lock_yes);
    if (acquire->parsed()) {
      acq.prep_given = prep_opt->count() > 0;
      return cmd_acquire(io, g, acq, context.acquisition);
    }
    if (archive->parsed()) return cmd_archive(io, g, dry_run, now_text);
    if (simulate->parsed()) return cmd_simulate(io, scenario, render, compare_with);
  } catch (const UsageError& e) {
    io.err << "evidenceflow: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    io.err << "evidenceflow: config: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArchiveBusy& e) {
    io.err << "evidenceflow: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    io.err << "evidenceflow: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace evidenceflow
