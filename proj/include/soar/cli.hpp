#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace soar::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kVerificationFailed = 3,
};

/// Resolved parameters of one command invocation, in declaration order.
struct RunConfig {
  std::string command;
  std::vector<std::pair<std::string, std::string>> entries;

  /// "# key=value" lines, starting with "# soar <command>".
  std::string header() const;
  /// Parses plain "key=value" lines; blank lines and lines starting with '#'
  /// or ';' are skipped.
  static std::vector<std::pair<std::string, std::string>> parse_file(const std::string& path);
};

/// Entry point shared by the `soar` binary and the tests. Subcommands:
/// synth, build, search, bench, diagnose, verify.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace soar::cli
