// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace pseudobound {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,   // runtime failure (I/O, training divergence, ...)
  kExitConfig = 2,    // invalid config or arguments
  kExitData = 3,      // unreadable or missing input data
  kExitEval = 4,      // missing scores or labels, misaligned lengths
};

/// Entry point of `pseudobound {toybench,train,score,eval,preview}`.
int run_cli(int argc, char **argv);

} // namespace pseudobound
