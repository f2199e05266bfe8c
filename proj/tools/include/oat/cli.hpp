#pragma once

#include <iosfwd>

namespace oat {

/// Entry point for the `oat` binary. Returns 0 on success, 1 on a usage error
/// and 2 on a runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oat
