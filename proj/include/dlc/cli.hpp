#pragma once

#include <iosfwd>

namespace dlc::cli {

// Process exit statuses.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kValidation = 3,
  kIo = 4,
  kEnumeration = 5,
  kCheckFailed = 6,
};

// Entry point of the `dlc` tool. Structured records go to `out` (one JSON
// object per line); human-readable tables and warnings go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dlc::cli
