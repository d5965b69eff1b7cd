// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scenediff::cli {

// Exit codes by error category.
enum ExitCode : int {
  kOk = 0,
  kGeneric = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kParse = 5,
  kSchema = 6,
  kShape = 7,
  kNumeric = 8,
  kCheckpoint = 9,
  kCheckFailed = 10,
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scenediff::cli
