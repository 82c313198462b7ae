#pragma once

#include <iosfwd>

namespace satomil::cli {

/// Entry point for the `satomil` tool. Returns 0 on success, 1 on usage
/// errors and 2 on runtime failures. Results go to `out`, progress and
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace satomil::cli
