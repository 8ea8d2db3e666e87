#pragma once

#include <iosfwd>
#include <string>

#include "fbsmp/config.hpp"

namespace fbsmp {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNoConvergence = 2, kExitInvertibility = 3, kExitFail = 4 };

// Each command writes config.json (resolved) and VERSION into cfg.out next to its artifacts.
int cmd_solve(const RunConfig& cfg, std::ostream& log);
int cmd_spike(const RunConfig& cfg, std::ostream& log);
// 0 on PASS, 4 on a maximum-principle violation.
int cmd_mp_check(const RunConfig& cfg, std::ostream& log);
// Runs the acceptance suite at the configured scale; 4 if any criterion fails.
int cmd_bench(const RunConfig& cfg, std::ostream& log);
// cmd_bench without the reproducibility criterion (which itself reruns bench).
int cmd_bench_inner(const RunConfig& cfg, std::ostream& log);

// Dispatches by name and maps exceptions to exit codes (1 config, 2 no convergence, 3 invertibility).
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log);

}  // namespace fbsmp
