#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hctl {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitIo = 4,
};

struct CommandOptions {
    std::string command;  // solve | follower | validate | sweep-alpha | simulate
    std::string scenario_path;
    std::string out_dir;
    std::vector<std::string> overrides;  // key.path=value
};

/// Runs one command, writes its artifacts into out_dir and returns the exit
/// code. Failures leave error.json in out_dir (when it can be created) and a
/// one-line JSON error on `err`.
int run(const CommandOptions& options, std::ostream& log, std::ostream& err);

}  // namespace hctl
