#pragma once

#include <string>
#include <vector>

namespace telekit::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,        // unexpected internal error
    kUsage = 2,          // unknown subcommand or flag
    kConfig = 3,         // configuration invalid or missing
    kInput = 4,          // malformed or unusable input data
    kGateway = 5,        // model endpoint failure
    kIo = 6,             // filesystem or stream failure
};

int dispatch(int argc, char** argv);
// argv[0] excluded.
int run(const std::vector<std::string>& args);

}  // namespace telekit::cli
