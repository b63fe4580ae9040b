#include <signal.h>

#include <stop_token>
#include <thread>

#include "evidenceflow/cli.hpp"

int main(int argc, char** argv) {
  // SIGINT/SIGTERM are consumed by a watcher thread that asks serve to stop
  // after the in-flight job has been finalized.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  sigaddset(&stop_signals, SIGUSR1);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  std::stop_source stop;
  std::jthread watcher([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    if (sig != SIGUSR1) stop.request_stop();
  });

  evidenceflow::CliContext context;
  context.stop = stop.get_token();
  const int code = evidenceflow::run_cli(argc, argv, context);

  // Wake the watcher so it can be joined.
  pthread_kill(watcher.native_handle(), SIGUSR1);
  return code;
}
