#ifndef SSIN_CLI_HPP
#define SSIN_CLI_HPP

#include <iosfwd>

namespace ssin::cli {

// Entry point of the `ssin` tool. Returns the process exit code: 0 on
// success, 1 on a library error, 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ssin::cli

#endif  // SSIN_CLI_HPP
