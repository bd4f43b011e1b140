#pragma once

#include <string>
#include <vector>

namespace mtc {

// Runs one command-line invocation. `args` is the argument list without the
// program name, in original order. Returns the process exit code: 0 success,
// 2 usage error, 3 data/contract error, 4 numerical fault. Error messages go
// to stderr; command output goes to files under --out plus a short stdout
// summary.
int run_cli(std::vector<std::string> args);

}  // namespace mtc
