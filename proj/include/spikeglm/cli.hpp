#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spikeglm {

enum ExitCode : int {
    kExitSuccess = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNotConverged = 3,
};

/// Runs one of `simulate`, `fit`, `check-grad`, `recover`. `args` excludes the
/// program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spikeglm
