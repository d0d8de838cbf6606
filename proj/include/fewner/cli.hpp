#pragma once

#include <string>
#include <vector>

namespace fewner::cli {

// Parses and runs one command-line invocation (program name excluded).
// Returns the process exit status: 0 success, 1 usage error, 2 runtime error.
int dispatch(std::vector<std::string> args);

}  // namespace fewner::cli
