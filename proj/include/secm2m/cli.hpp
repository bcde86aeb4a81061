// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace secm2m::cli {

enum ExitStatus : int { kOk = 0, kOperationalError = 1, kUsageError = 2 };

/// Parses argv, runs exactly one subcommand and returns the process status.
/// Reports and tables go to `out`; diagnostics and JSON-line events to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace secm2m::cli
