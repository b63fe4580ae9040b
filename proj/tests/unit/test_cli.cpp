#include <gtest/gtest.h>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "evidenceflow/cli.hpp"
#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/job.hpp"
#include "evidenceflow/layout.hpp"
#include "evidenceflow/source_lock.hpp"
#include "support.hpp"

using namespace evidenceflow;
using evidenceflow::test::count_files;
using evidenceflow::test::TempDir;
using evidenceflow::test::tree;
using evidenceflow::test::write_text;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result cli(std::vector<std::string> args, const std::string& input = "", AcquisitionHooks hooks = {}) {
  args.insert(args.begin(), "evidenceflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  CliContext ctx;
  ctx.in = &in;
  ctx.out = &out;
  ctx.err = &err;
  ctx.acquisition = std::move(hooks);
  Result r;
  r.code = run_cli(int(argv.size()), argv.data(), ctx);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string server_config(const TempDir& tmp, const std::string& runner = "mock") {
  const auto path = tmp / "server.conf";
  write_text(path, "server_id = s1\nqueue_root = " + (tmp / "q").string() +
                       "\npoll_interval = 0.05\nrunner = " + runner + "\nrunner.sleep_ms = 0\n");
  return path.string();
}

std::string acquisition_config(const TempDir& tmp) {
  const auto path = tmp / "acquire.conf";
  write_text(path, "staging_root = " + (tmp / "staging").string() +
                       "\n[location]\nname = lab\nfileserver_path = " + (tmp / "fs").string() +
                       "\nbackup_path = " + (tmp / "bk").string() +
                       "\n[queue]\ntool = ief\nroot = " + (tmp / "qi").string() +
                       "\n[queue]\ntool = bulk_extractor\nroot = " + (tmp / "qb").string() +
                       "\n[fake_device]\ndevice_id = usb-7\ndescription = Test disk\n"
                       "size_bytes = 65536\nconnected_at = 1\n");
  init_queue_layout(tmp / "qi");
  init_queue_layout(tmp / "qb");
  return path.string();
}

std::vector<std::string> submit_args(const TempDir& tmp, const std::string& name) {
  std::filesystem::create_directories(tmp / "ev" / name);
  return {"submit", "--queue", (tmp / "q").string(), "--tool", "mock",
          "--source", (tmp / "ev" / name / "img.raw").string(), "--output", (tmp / "out" / name).string(),
          "--case", "C1", "--name", name};
}

}  // namespace

TEST(Cli, UnknownSubcommandListsCommands) {
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("simulate"), std::string::npos);
  EXPECT_NE(r.err.find("archive"), std::string::npos);
}

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, SubmitTwiceOrdersBySeq) {
  TempDir tmp;
  ASSERT_EQ(cli({"init", "--queue", (tmp / "q").string()}).code, 0);
  const auto a = cli(submit_args(tmp, "e1"));
  const auto b = cli(submit_args(tmp, "e2"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0);
  const auto files = list_sorted(tmp / "q" / "queue", ".job");
  ASSERT_EQ(files.size(), 2u);
  const auto first = parse_job_file(read_file(files[0]));
  const auto second = parse_job_file(read_file(files[1]));
  EXPECT_LT(first.seq, second.seq);
  EXPECT_EQ(first.evidence_name, "e1");
  EXPECT_EQ(first.source_root, tmp / "ev" / "e1");
}

TEST(Cli, SubmitToMissingQueueFails) {
  TempDir tmp;
  const auto r = cli(submit_args(tmp, "e1"));
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, SubmitRejectsBadParam) {
  TempDir tmp;
  cli({"init", "--queue", (tmp / "q").string()});
  auto args = submit_args(tmp, "e1");
  args.insert(args.end(), {"--param", "novalue"});
  EXPECT_EQ(cli(args).code, 1);
}

TEST(Cli, StatusCounts) {
  TempDir tmp;
  const auto layout = init_queue_layout(tmp / "q");
  cli(submit_args(tmp, "a"));
  cli(submit_args(tmp, "b"));
  write_text(layout.processing() / "p.job", "");
  write_text(layout.locked() / "l.job", "");
  const auto r = cli({"status", "--queue", (tmp / "q").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find("oldest")),
            "queue=2\nprocessing=1\nsucceeded=0\nfailed=0\nlocked=1\n");
}

TEST(Cli, ServeOnceDrainsQueue) {
  TempDir tmp;
  const auto config = server_config(tmp);
  cli({"--config", config, "init"});
  for (const char* n : {"a", "b", "c"}) cli(submit_args(tmp, n));
  const auto r = cli({"--config", config, "serve", "--once"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(tmp / "q" / "queue", ".job"), 0u);
  EXPECT_EQ(count_files(tmp / "q" / "succeeded", ".job"), 3u);
  EXPECT_NE(r.err.find(" INFO s1 "), std::string::npos);
}

TEST(Cli, ServeWithUnknownRunnerFailsBeforeClaiming) {
  TempDir tmp;
  const auto config = server_config(tmp, "no_such");
  init_queue_layout(tmp / "q");
  cli(submit_args(tmp, "a"));
  const auto r = cli({"--config", config, "serve", "--once"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("mock"), std::string::npos);
  EXPECT_EQ(count_files(tmp / "q" / "queue", ".job"), 1u);
}

TEST(Cli, ConfigFromEnvironment) {
  TempDir tmp;
  const auto config = server_config(tmp);
  ::setenv("EVIDENCEFLOW_CONFIG", config.c_str(), 1);
  const auto r = cli({"init"});
  ::unsetenv("EVIDENCEFLOW_CONFIG");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(QueueLayout(tmp / "q").is_initialized());
  EXPECT_EQ(cli({"init"}).code, 1);
}

TEST(Cli, LockBreakOnUnlockedSourceIsNoOp) {
  TempDir tmp;
  const auto r = cli({"lock", "break", "--source", tmp.path().string(), "--yes"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("no lock"), std::string::npos);
}

TEST(Cli, LockBreakThenRequeueLetsJobProceed) {
  TempDir tmp;
  const auto config = server_config(tmp);
  init_queue_layout(tmp / "q");
  cli(submit_args(tmp, "a"));
  acquire_lock(tmp / "ev" / "a", "crashed-server", "old-job");
  cli({"--config", config, "serve", "--once"});
  EXPECT_EQ(count_files(tmp / "q" / "locked", ".job"), 1u);

  // Declining keeps the lock.
  auto r = cli({"lock", "break", "--source", (tmp / "ev" / "a").string()}, "n\n");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(read_lock(tmp / "ev" / "a"));
  r = cli({"lock", "break", "--source", (tmp / "ev" / "a").string()}, "y\n");
  EXPECT_EQ(r.code, 0);
  EXPECT_FALSE(read_lock(tmp / "ev" / "a"));

  EXPECT_EQ(cli({"--config", config, "requeue"}).out, "requeued=1\n");
  cli({"--config", config, "serve", "--once"});
  EXPECT_EQ(count_files(tmp / "q" / "succeeded", ".job"), 1u);
}

TEST(Cli, AcquireScripted) {
  TempDir tmp;
  const auto config = acquisition_config(tmp);
  const auto r = cli({"--config", config, "acquire", "--device-id", "usb-7", "--dest", "lab", "--case", "C-9",
                      "--name", "disk1", "--investigator", "inv1", "--prep", "ief,bulk_extractor", "--yes"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("result=success\n"), std::string::npos);
  EXPECT_EQ(count_files(tmp / "qi" / "queue", ".job"), 1u);
  EXPECT_EQ(count_files(tmp / "qb" / "queue", ".job"), 1u);
}

TEST(Cli, AcquireInteractivePromptsInOrder) {
  TempDir tmp;
  const auto config = acquisition_config(tmp);
  const auto r = cli({"--config", config, "acquire"}, "\nusb-7\nlab\nC-9\ndisk1\ninv1\nief\ny\n");
  EXPECT_EQ(r.code, 0) << r.err;
  const auto device = r.err.find("device id");
  const auto dest = r.err.find("destination:");
  const auto name = r.err.find("evidence name");
  const auto inv = r.err.find("investigator:");
  const auto prep = r.err.find("preparations (");
  EXPECT_LT(device, dest);
  EXPECT_LT(dest, name);
  EXPECT_LT(name, inv);
  EXPECT_LT(inv, prep);
  EXPECT_EQ(count_files(tmp / "qi" / "queue", ".job"), 1u);
}

TEST(Cli, AcquireMissingCaseIsUsageError) {
  TempDir tmp;
  const auto config = acquisition_config(tmp);
  const auto r = cli({"--config", config, "acquire", "--device-id", "usb-7", "--dest", "lab", "--name", "d",
                      "--investigator", "i", "--yes"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--case"), std::string::npos);
  // Closed input while prompting is also a usage error.
  EXPECT_EQ(cli({"--config", config, "acquire", "--device-id", "usb-7"}, "").code, 1);
}

TEST(Cli, AcquireCorruptedReplicaExitsTwo) {
  TempDir tmp;
  const auto config = acquisition_config(tmp);
  AcquisitionHooks hooks;
  hooks.after_replicate = [](ReplicaKind kind, const std::vector<std::filesystem::path>& files) {
    if (kind != ReplicaKind::Backup) return;
    std::fstream f(files.front(), std::ios::in | std::ios::out | std::ios::binary);
    char c = 0;
    f.read(&c, 1);
    c ^= 0x40;
    f.seekp(0);
    f.write(&c, 1);
  };
  const auto r = cli({"--config", config, "acquire", "--device-id", "usb-7", "--dest", "lab", "--case", "C-9",
                      "--name", "disk1", "--investigator", "inv1", "--prep", "ief", "--yes"},
                     "", hooks);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("failed_step=5\n"), std::string::npos);
  EXPECT_EQ(count_files(tmp / "qi" / "queue", ".job"), 0u);
}

TEST(Cli, ArchiveDryRunLeavesFilesystemUntouched) {
  TempDir tmp;
  write_text(tmp / "cases" / "C-1" / "e" / "image" / "x.raw", "x");
  write_text(tmp / "registry.tsv", "case_id\tstatus\tstatus_date_utc\nC-1\tclosed\t2014-01-01T00:00:00Z\n");
  write_text(tmp / "archive.conf", "archive_root = " + (tmp / "archive").string() + "\nsource_root = " +
                                       (tmp / "cases").string() + "\nregistry = " +
                                       (tmp / "registry.tsv").string() + "\n");
  const auto before = tree(tmp.path());
  const auto r = cli({"--config", (tmp / "archive.conf").string(), "archive", "--dry-run", "--now",
                      "2014-03-01T00:00:00Z"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("would_move=1\n"), std::string::npos);
  EXPECT_EQ(tree(tmp.path()), before);
  EXPECT_EQ(cli({"--config", (tmp / "archive.conf").string(), "archive", "--now", "yesterday"}).code, 1);
}

TEST(Cli, SimulateNeedsNoConfig) {
  const auto r = cli({"simulate", "--scenario", std::string(EVIDENCEFLOW_SCENARIO_DIR) + "/table2.scn",
                      "--render-table"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| Device | Evidence system 1 |"), std::string::npos);
  EXPECT_NE(r.out.find("metrics:\nmakespan_hours=244.0\n"), std::string::npos);
  EXPECT_EQ(cli({"simulate", "--scenario", "/nonexistent.scn"}).code, 1);
}

TEST(Cli, InterruptFinishesInFlightJob) {
  // Signal injection against the real binary; folder state is the oracle.
  TempDir tmp;
  const auto config = tmp / "server.conf";
  write_text(config, "server_id = s1\nqueue_root = " + (tmp / "q").string() +
                         "\npoll_interval = 0.05\nrunner = mock\nrunner.sleep_ms = 600\n");
  init_queue_layout(tmp / "q");
  cli(submit_args(tmp, "a"));
  cli(submit_args(tmp, "b"));

  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const int devnull = ::open("/dev/null", O_WRONLY);
    ::dup2(devnull, STDOUT_FILENO);
    ::dup2(devnull, STDERR_FILENO);
    ::execl(EVIDENCEFLOW_CLI_PATH, "evidenceflow", "--config", config.c_str(), "serve", nullptr);
    ::_exit(127);
  }
  // Wait for the first claim, then interrupt mid-job.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (count_files(tmp / "q" / "processing", ".job") == 0 && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ::kill(pid, SIGINT);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_EQ(count_files(tmp / "q" / "processing", ".job"), 0u);
  EXPECT_EQ(count_files(tmp / "q" / "succeeded", ".job"), 1u);
  EXPECT_EQ(count_files(tmp / "q" / "queue", ".job"), 1u);
}
