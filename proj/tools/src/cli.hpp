#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace facefuse::cli {

// Parses and runs one command. Diagnostics go to `err` as a single JSON line
// {"error": <code>, "command": <name>, "message": <text>}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace facefuse::cli
