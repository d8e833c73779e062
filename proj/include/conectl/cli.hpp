#pragma once

#include <string>
#include <vector>

namespace conectl {

// Command-line entry point. Subcommands: validate, solve, solve-nested,
// residual, simulate, dpp-check, reduce. Returns the process exit code:
// 0 ok, 2 spec error, 3 assumption violation, 4 non-convergence.
// Artifacts embed the spec hash, seed and tool version and contain no
// timestamps, so identical invocations produce identical bytes.
int run_cli(const std::vector<std::string>& args);

}  // namespace conectl
