#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace minecon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNotConverged = 2;

inline constexpr unsigned long long kDefaultSeed = 20210601ULL;

// args excludes the program name. Data goes to `out` unless --output is
// given; diagnostics and summaries go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace minecon::cli
