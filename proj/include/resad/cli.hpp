#pragma once

#include <ostream>

namespace resad {

// Runs one subcommand (synth, train, eval, stats, verify). Returns the process
// exit code: 0 success, 2 I/O failure, 1 any other error (including usage).
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace resad
