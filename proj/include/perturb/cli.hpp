#pragma once

#include <iosfwd>

namespace perturb::cli {

// Entry point behind the `perturb` binary. Exit codes: 0 success, 1 usage or
// I/O error, 2 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace perturb::cli
