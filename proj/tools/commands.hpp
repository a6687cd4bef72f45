#pragma once

#include <iosfwd>

namespace mvam::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kInternal = 5,
};

// Entry point of the `mvam` tool; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvam::cli
