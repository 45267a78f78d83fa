#pragma once

#include <iosfwd>

namespace nowcast::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kConvergence = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nowcast::cli
