#pragma once

// Subcommand dispatcher for the `dsfusion` executable.
//
// Exit codes: 0 on success, 1 on a runtime error (reported as one line
// `error: <kind>: <message>` on the error stream), 2 on a usage error.

#include <ostream>
#include <string>
#include <vector>

namespace dsf {

int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace dsf
