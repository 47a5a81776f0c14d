#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace odmr::cli {

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command line (without the program name), e.g.
// {"simulate", "--model", "five-level-ir", "--out", "run1"}.
// Progress goes to `out`; errors to `err` as single
// `error: kind=... exit=... message="..."` lines.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace odmr::cli
