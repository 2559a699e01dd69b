#pragma once

namespace salsum {

// Parses argv and dispatches to the subcommands (make-labels, train,
// generate, evaluate, extract, verify). Returns the process exit code:
// 0 success, 1 check/run failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace salsum
