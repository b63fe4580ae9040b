#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "evidenceflow/error.hpp"
#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/layout.hpp"
#include "evidenceflow/queue_server.hpp"
#include "evidenceflow/server_config.hpp"
#include "evidenceflow/source_lock.hpp"
#include "evidenceflow/timeutil.hpp"
#include "support.hpp"

using namespace evidenceflow;
using evidenceflow::test::count_files;
using evidenceflow::test::read_text;
using evidenceflow::test::TempDir;
using evidenceflow::test::write_text;

namespace {

struct Fixture {
  TempDir tmp;
  QueueLayout layout = init_queue_layout(tmp / "q");
  ServerConfig config;

  Fixture() {
    config.server_id = "srv1";
    config.queue_root = layout.root();
    config.poll_interval = std::chrono::milliseconds(20);
    config.runner = "mock";
    config.runner_settings = {{"entry_log", (tmp / "entries.log").string()}};
  }

  JobSpec submit(const std::string& evidence) {
    JobSpec j;
    j.job_id = make_job_id();
    j.tool = "mock";
    j.source_root = tmp / "evidence" / evidence;
    j.source = j.source_root / "image.raw";
    j.output = tmp / "out" / evidence;
    j.case_id = "C1";
    j.evidence_name = evidence;
    j.requested_by = "inv";
    j.created_utc = now_utc();
    std::filesystem::create_directories(j.source_root);
    submit_job(layout, j);
    return j;
  }

  std::vector<std::string> entered() const {
    std::vector<std::string> ids;
    std::istringstream in(read_text(tmp / "entries.log"));
    std::string verb, id, rest;
    while (in >> verb >> id && std::getline(in, rest))
      if (verb == "enter") ids.push_back(id);
    return ids;
  }
};

ServeStats serve_once(const ServerConfig& config) {
  return serve(config, RunnerRegistry::with_builtins(), std::stop_token{}, ServeOptions{true});
}

}  // namespace

TEST(ServerConfig, ParsesAllKeys) {
  const auto c = parse_server_config(
      "server_id = ief1\n"
      "queue_root = /srv/queues/ief\n"
      "poll_interval = 2.5\n"
      "runner = generic_command\n"
      "lock_policy = shared\n"
      "runner.command_template = ief --in {source}\n"
      "runner.ok_exit_codes = 0,1\n");
  EXPECT_EQ(c.server_id, "ief1");
  EXPECT_EQ(c.queue_root, "/srv/queues/ief");
  EXPECT_EQ(c.poll_interval.count(), 2500);
  EXPECT_EQ(c.runner, "generic_command");
  EXPECT_EQ(c.lock_policy, LockPolicy::Shared);
  EXPECT_EQ(c.runner_settings.at("command_template"), "ief --in {source}");
  EXPECT_EQ(c.runner_settings.at("ok_exit_codes"), "0,1");
}

TEST(ServerConfig, DefaultsAndErrors) {
  const auto c = parse_server_config("server_id=a\nqueue_root=/q\nrunner=mock\n");
  EXPECT_EQ(c.poll_interval.count(), 5000);
  EXPECT_EQ(c.lock_policy, LockPolicy::Exclusive);
  try {
    parse_server_config("server_id=a\nqueue_root=/q\nrunner=mock\npoll_interval=0\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(parse_server_config("server_id=a\nqueue_root=/q\nrunner=mock\ncolour=red\n"), ConfigError);
  EXPECT_THROW(parse_server_config("queue_root=/q\nrunner=mock\n"), ConfigError);
}

TEST(ServerConfig, UnknownRunnerRejectedBeforeAnyClaim) {
  Fixture f;
  f.submit("e1");
  f.config.runner = "no_such";
  EXPECT_THROW(serve_once(f.config), ConfigError);
  EXPECT_EQ(count_files(f.layout.queue(), ".job"), 1u);
}

TEST(Claim, EmptyQueueYieldsNothing) {
  Fixture f;
  EXPECT_FALSE(claim_next(f.layout, "srv1"));
}

TEST(Claim, TakesOldestAndMarksIt) {
  Fixture f;
  const auto a = f.submit("e1");
  f.submit("e2");
  const auto claimed = claim_next(f.layout, "srv1");
  ASSERT_TRUE(claimed);
  EXPECT_EQ(claimed->job, a);
  EXPECT_EQ(claimed->file_path.parent_path(), f.layout.processing());
  const auto marker = read_text(claimed->file_path.string() + ".claim");
  EXPECT_NE(marker.find("server_id=srv1\n"), std::string::npos);
  EXPECT_EQ(count_files(f.layout.queue(), ".job"), 1u);
}

TEST(Claim, MalformedJobGoesToFailed) {
  Fixture f;
  write_text(f.layout.queue() / "00000000T000000Z_00000000_bad.job", "version=9\n");
  const auto good = f.submit("e1");
  const auto claimed = claim_next(f.layout, "srv1");
  ASSERT_TRUE(claimed);
  EXPECT_EQ(claimed->job.job_id, good.job_id);
  const auto sidecar = f.layout.failed() / "00000000T000000Z_00000000_bad.job.result";
  ASSERT_TRUE(std::filesystem::exists(sidecar));
  EXPECT_NE(read_text(sidecar).find("outcome=failed\n"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(f.layout.processing() / "00000000T000000Z_00000000_bad.job.claim"));
}

TEST(Claim, ConcurrentClaimersNeverShareAJob) {
  Fixture f;
  std::set<std::string> submitted;
  for (int i = 0; i < 60; ++i) submitted.insert(f.submit("e" + std::to_string(i)).job_id);
  std::mutex mu;
  std::multiset<std::string> claimed;
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t)
    threads.emplace_back([&, t] {
      while (auto c = claim_next(f.layout, "srv" + std::to_string(t))) {
        std::lock_guard lock(mu);
        claimed.insert(c->job.job_id);
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(claimed.size(), 60u);
  EXPECT_EQ(std::set<std::string>(claimed.begin(), claimed.end()), submitted);
}

TEST(Execute, SuccessWritesSidecarAndCaptures) {
  Fixture f;
  const auto j = f.submit("e1");
  const auto claimed = claim_next(f.layout, "srv1");
  auto runner = RunnerRegistry::with_builtins().create("mock");
  const auto outcome = execute_claimed(*claimed, *runner, f.config);
  EXPECT_EQ(outcome.kind, OutcomeKind::Succeeded);
  const auto final_path = finalize(*claimed, outcome, f.layout);
  EXPECT_EQ(final_path, f.layout.succeeded() / job_filename(j));
  const auto sidecar = read_text(result_sidecar(final_path));
  EXPECT_EQ(sidecar.rfind("job_id=" + j.job_id + "\noutcome=succeeded\n", 0), 0u);
  EXPECT_NE(sidecar.find("server_id=srv1\n"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(capture_paths(final_path).stdout_path));
  EXPECT_FALSE(read_lock(j.source_root));
  EXPECT_EQ(std::filesystem::directory_iterator(f.layout.processing()), std::filesystem::directory_iterator());
}

TEST(Execute, FailureReleasesLock) {
  Fixture f;
  f.config.runner_settings["behavior"] = "fail";
  const auto j = f.submit("e1");
  const auto stats = serve_once(f.config);
  EXPECT_EQ(stats.failed, 1u);
  EXPECT_FALSE(read_lock(j.source_root));
  EXPECT_EQ(count_files(f.layout.failed(), ".job"), 1u);
}

TEST(Execute, ForeignLockParksJobWithoutRunningTool) {
  Fixture f;
  const auto j = f.submit("e1");
  ASSERT_TRUE(std::holds_alternative<SourceLock>(acquire_lock(j.source_root, "other", "x")));
  const auto stats = serve_once(f.config);
  EXPECT_EQ(stats.locked, 1u);
  EXPECT_EQ(count_files(f.layout.locked(), ".job"), 1u);
  EXPECT_TRUE(f.entered().empty());
  EXPECT_EQ(read_lock(j.source_root)->holder, "other");

  break_lock(j.source_root);
  EXPECT_EQ(requeue_locked(f.layout), 1u);
  EXPECT_EQ(count_files(f.layout.locked(), ".result"), 0u);
  EXPECT_EQ(serve_once(f.config).succeeded, 1u);
  EXPECT_EQ(f.entered(), std::vector<std::string>{j.job_id});
}

TEST(Execute, SharedPolicyIgnoresLocks) {
  Fixture f;
  f.config.lock_policy = LockPolicy::Shared;
  const auto j = f.submit("e1");
  acquire_lock(j.source_root, "other", "x");
  EXPECT_EQ(serve_once(f.config).succeeded, 1u);
  EXPECT_EQ(read_lock(j.source_root)->holder, "other");
}

TEST(Serve, FifoCompletionOrderProperty) {
  std::mt19937_64 rng(4242);
  Fixture f;
  std::vector<JobSpec> jobs;
  // Randomized evidence names and submit bursts; order must follow filenames.
  for (int i = 0; i < 50; ++i) {
    jobs.push_back(f.submit("ev" + std::to_string(rng() % 1000) + "_" + std::to_string(i)));
    if (rng() % 7 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  std::vector<std::string> names;
  for (const auto& p : list_sorted(f.layout.queue(), ".job")) names.push_back(p.filename().string());
  EXPECT_EQ(serve_once(f.config).succeeded, 50u);
  std::vector<std::string> expected;
  for (const auto& n : names) expected.push_back(parse_job_file(read_file(f.layout.succeeded() / n)).job_id);
  EXPECT_EQ(f.entered(), expected);
}

TEST(Serve, StopFinishesInFlightJob) {
  Fixture f;
  f.config.runner_settings["sleep_ms"] = "300";
  f.submit("e1");
  f.submit("e2");
  std::stop_source stop;
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    stop.request_stop();
  });
  const auto stats = serve(f.config, RunnerRegistry::with_builtins(), stop.get_token());
  stopper.join();
  EXPECT_EQ(stats.succeeded, 1u);
  EXPECT_EQ(count_files(f.layout.succeeded(), ".job"), 1u);
  EXPECT_EQ(count_files(f.layout.queue(), ".job"), 1u);
  EXPECT_EQ(count_files(f.layout.processing(), ".job"), 0u);
}

TEST(Serve, IdleLoopWakesOnStop) {
  Fixture f;
  f.config.poll_interval = std::chrono::hours(1);
  std::stop_source stop;
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    stop.request_stop();
  });
  const auto started = std::chrono::steady_clock::now();
  serve(f.config, RunnerRegistry::with_builtins(), stop.get_token());
  stopper.join();
  EXPECT_LT(std::chrono::steady_clock::now() - started, std::chrono::seconds(5));
}

TEST(Recovery, OwnDeadClaimIsRequeued) {
  Fixture f;
  f.submit("e1");
  const auto claimed = claim_next(f.layout, "srv1");
  ASSERT_TRUE(claimed);
  // Pretend the claim came from an earlier, now dead, process of this server.
  auto marker = read_text(claimed->file_path.string() + ".claim");
  const auto pid_at = marker.find("pid=");
  marker.replace(pid_at, marker.find('\n', pid_at) - pid_at, "pid=999999999");
  write_text(claimed->file_path.string() + ".claim", marker);

  EXPECT_EQ(recover_orphans(f.layout, "other"), 0u);
  EXPECT_EQ(recover_orphans(f.layout, "srv1"), 1u);
  EXPECT_EQ(count_files(f.layout.queue(), ".job"), 1u);
  EXPECT_EQ(count_files(f.layout.processing(), ".claim"), 0u);
}

TEST(Recovery, LiveOwnerIsLeftAlone) {
  Fixture f;
  f.submit("e1");
  const auto claimed = claim_next(f.layout, "srv1");
  auto marker = read_text(claimed->file_path.string() + ".claim");
  const auto pid_at = marker.find("pid=");
  marker.replace(pid_at, marker.find('\n', pid_at) - pid_at, "pid=1");
  write_text(claimed->file_path.string() + ".claim", marker);
  EXPECT_EQ(recover_orphans(f.layout, "srv1"), 0u);
}

TEST(Recovery, FreshUnmarkedFileWaitsForGrace) {
  Fixture f;
  f.submit("e1");
  const auto claimed = claim_next(f.layout, "srv1");
  std::filesystem::remove(claimed->file_path.string() + ".claim");
  EXPECT_EQ(recover_orphans(f.layout, "srv1"), 0u);
}

TEST(Status, CountsPerFolder) {
  Fixture f;
  f.submit("a");
  f.submit("b");
  write_text(f.layout.processing() / "x.job", "");
  write_text(f.layout.locked() / "y.job", "");
  const auto c = count_jobs(f.layout);
  EXPECT_EQ(c.queued, 2u);
  EXPECT_EQ(c.processing, 1u);
  EXPECT_EQ(c.succeeded, 0u);
  EXPECT_EQ(c.failed, 0u);
  EXPECT_EQ(c.locked, 1u);
  EXPECT_TRUE(c.oldest_queued_created);
}
