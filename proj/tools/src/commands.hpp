#pragma once

#include <iosfwd>

namespace dmrn::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kTrainingFailure = 3,
};

/// Parses argv and runs one command. Progress goes to `out`, diagnostics
/// to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dmrn::cli
