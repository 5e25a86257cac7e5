#pragma once

// The pinnflow command line: train, predict, sweep and export-points.

#include <iosfwd>
#include <string>
#include <vector>

namespace pinnflow::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kUsage = 2,  ///< bad arguments or configuration
  kDivergence = 3,
  kCheckpointIncompatible = 4,
};

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pinnflow::cli
