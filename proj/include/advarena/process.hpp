#pragma once

#include <filesystem>
#include <string>

namespace advarena {

struct ProcessResult {
  bool started = false;
  bool timed_out = false;
  int exit_code = -1;  // valid when the child exited normally
  int signal = 0;      // terminating signal, 0 if none
  double seconds = 0.0;

  bool ok() const { return started && !timed_out && signal == 0 && exit_code == 0; }
  std::string describe() const;
};

/// Runs `/bin/sh -c command` in its own process group. On timeout the whole group is killed with SIGKILL.
/// stdout and stderr go to log_path when it is non-empty.
ProcessResult run_shell(const std::string& command, double timeout_seconds, const std::filesystem::path& log_path = {});

/// Single-quotes s for /bin/sh.
std::string shell_quote(const std::string& s);

}  // namespace advarena
