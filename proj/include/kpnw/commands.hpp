#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kpnw/config.hpp"

namespace kpnw {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,  // check: residuals above tolerance
    kExitInput = 2,        // bad config, flags or input file
    kExitNotConverged = 3, // solve/sweep finished, record written, not converged
};

const std::vector<std::string>& command_names();

// Validates kv into a RunConfig and runs the command. JSON results are
// printed to `out`; solve and sweep also write under cfg.out. Errors are
// logged and mapped to exit codes; nothing is written on an input error.
int run_command(const std::string& name, const KeyValues& kv, std::ostream& out);

int cmd_solve(const RunConfig& c, std::ostream& out);
int cmd_thresholds(const RunConfig& c, std::ostream& out);
int cmd_fiber(const RunConfig& c, std::ostream& out);
int cmd_sweep(const RunConfig& c, std::ostream& out);
int cmd_check(const RunConfig& c, std::ostream& out);
int cmd_gn_estimate(const RunConfig& c, std::ostream& out);

}  // namespace kpnw
