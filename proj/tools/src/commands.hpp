#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace layersim::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalError = 3 };

/// Misuse of the command line that the argument parser cannot see.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Names accepted by `analyze`.
const std::vector<std::string>& analysis_names();

/// Entry point shared by the executable and the tests; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layersim::cli
