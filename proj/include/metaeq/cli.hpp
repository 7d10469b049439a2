#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "metaeq/errors.hpp"
#include "metaeq/harness.hpp"

namespace metaeq::cli {

/// Process exit statuses.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kAssumption = 3,
  kMaxIterations = 4,
  kRuntime = 5,
};

int exit_code_for(const Error& e);
int exit_code_for(const GradCheckReport& report);

/// Runs the command line `args` (args[0] is the program name). Payloads go
/// to `out` (JSON or CSV only), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace metaeq::cli
