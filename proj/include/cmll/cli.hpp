#pragma once

namespace cmll::cli {

/// Entry point for the `cmll` command line tool. Exit codes: 0 success /
/// converged, 2 iteration cap reached, 1 error.
int run(int argc, const char* const* argv);

}  // namespace cmll::cli
