#ifndef SONARGEN_CLI_HPP
#define SONARGEN_CLI_HPP

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace sonargen::cli {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kNumeric = 3, kIo = 4 };

/// Runs one command line (without the program name). Errors are reported as a
/// single JSON line on stderr and mapped to the exit codes above.
int run(const std::vector<std::string>& args);

/// The manifest a command line would record, without running it.
nlohmann::json effective_flags(const std::vector<std::string>& args);

}  // namespace sonargen::cli

#endif  // SONARGEN_CLI_HPP
