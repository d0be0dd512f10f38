#pragma once

namespace ae2i {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,  // bad arguments, config, or file format
  kExitNumeric = 3,
};

/// Entry point of the ae2il command-line tool.
int run_cli(int argc, char** argv);

}  // namespace ae2i
