#pragma once

#include <iosfwd>
#include <stop_token>

#include "evidenceflow/acquisition.hpp"

namespace evidenceflow {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFailure = 2 };

// Injection points for tests and the real binary.
struct CliContext {
  std::istream* in = nullptr;   // prompt answers; std::cin when null
  std::ostream* out = nullptr;  // data; std::cout when null
  std::ostream* err = nullptr;  // logs and prompts; std::cerr when null
  std::stop_token stop;         // serve returns once this is requested
  AcquisitionHooks acquisition;
};

int run_cli(int argc, const char* const* argv, const CliContext& context = {});

}  // namespace evidenceflow
