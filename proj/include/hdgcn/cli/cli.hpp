#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hdgcn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataOrConfig = 2, kNumerical = 3 };

/// Parses argv and runs the selected subcommand. Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

struct FlagDoc {
  std::string command;  // "" for global flags, else e.g. "graph build"
  std::string flag;     // "--topology"
  std::string description;
};

/// Every registered flag with its help text.
std::vector<FlagDoc> flag_table();

/// The --help text of a command path such as "train" or "data generate".
std::string help_text(const std::string& command);

}  // namespace hdgcn::cli
