#ifndef WEIPER_CLI_HPP_
#define WEIPER_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace weiper::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one subcommand. args[0] is the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace weiper::cli

#endif  // WEIPER_CLI_HPP_
