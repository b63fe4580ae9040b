#pragma once

#include "evidenceflow/runner.hpp"

namespace evidenceflow {

// Spawns plan.argv[0] (PATH lookup) in its own process group with stdout and
// stderr redirected to the capture files. On timeout the whole group gets
// SIGKILL. Throws IoError when the capture files cannot be opened; a program
// that cannot be executed exits with status 127.
ExecRecord run_process(const InvocationPlan& plan, const CapturePaths& capture);

}  // namespace evidenceflow
