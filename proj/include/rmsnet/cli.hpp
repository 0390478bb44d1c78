#pragma once

// Command-line front end: synth, import, train, eval, infer, gradcheck.

#include <iosfwd>

#include "rmsnet/errors.hpp"

namespace rmsnet {

/// 0 success, 1 usage, 2 data/format, 3 numeric failure.
int exit_code_for(ErrorKind kind);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace rmsnet
