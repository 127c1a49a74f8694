#pragma once

namespace tcdsg::cli {

// Entry point for the tcdsg tool. Subcommands: synth, pseudo-label, match,
// assemble, eval, losses. Returns the process exit code: 0 success,
// 1 usage/validation error, 2 I/O error, 3 infeasible input.
int run(int argc, char** argv);

}  // namespace tcdsg::cli
