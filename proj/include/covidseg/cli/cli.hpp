#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace covidseg {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one subcommand. Returns 0 on success, 1 on a domain error (one-line
// diagnostic on err) and 2 on a usage error (usage text on err).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace covidseg
